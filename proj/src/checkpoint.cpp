#include "kegat/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "kegat/binio.hpp"
#include "kegat/error.hpp"

namespace kegat::trainkit {

namespace {

enum class DType : std::uint8_t { F64 = 0, I64 = 1, U8 = 2 };

struct Record {
  std::string name;
  DType dtype = DType::F64;
  std::vector<std::uint64_t> dims;
  std::string bytes;
};

void put_record(std::ostream& out, const std::string& name, DType dtype,
                const std::vector<std::uint64_t>& dims, const void* data, std::size_t nbytes) {
  binio::put_string(out, name);
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) binio::put<std::uint64_t>(out, d);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(nbytes));
}

void put_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  // Row-major on disk.
  std::vector<double> buf(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) buf[k++] = m(r, c);
  }
  put_record(out, name, DType::F64,
             {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, buf.data(),
             buf.size() * sizeof(double));
}

void put_text(std::ostream& out, const std::string& name, const std::string& s) {
  put_record(out, name, DType::U8, {s.size()}, s.data(), s.size());
}

void put_i64s(std::ostream& out, const std::string& name, const std::vector<std::int64_t>& v) {
  put_record(out, name, DType::I64, {v.size()}, v.data(), v.size() * sizeof(std::int64_t));
}

void put_f64s(std::ostream& out, const std::string& name, const std::vector<double>& v) {
  put_record(out, name, DType::F64, {v.size()}, v.data(), v.size() * sizeof(double));
}

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::F64: return 8;
    case DType::I64: return 8;
    case DType::U8: return 1;
  }
  throw DataError("unknown tensor dtype");
}

Record get_record(std::istream& in) {
  Record r;
  r.name = binio::get_string(in);
  const auto tag = binio::get<std::uint8_t>(in);
  if (tag > 2) throw DataError("unknown tensor dtype in record " + r.name);
  r.dtype = static_cast<DType>(tag);
  const auto rank = binio::get<std::uint8_t>(in);
  std::uint64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    r.dims.push_back(binio::get<std::uint64_t>(in));
    count *= r.dims.back();
  }
  if (count > (std::uint64_t{1} << 34)) throw DataError("implausible tensor size in record " + r.name);
  r.bytes.resize(count * dtype_size(r.dtype));
  if (!r.bytes.empty() && !in.read(r.bytes.data(), static_cast<std::streamsize>(r.bytes.size()))) {
    throw DataError("truncated checkpoint in record " + r.name);
  }
  return r;
}

Matrix as_matrix(const Record& r) {
  if (r.dtype != DType::F64 || r.dims.size() != 2) throw DataError("record " + r.name + " is not a matrix");
  Matrix m(static_cast<Eigen::Index>(r.dims[0]), static_cast<Eigen::Index>(r.dims[1]));
  const auto* p = reinterpret_cast<const double*>(r.bytes.data());
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = p[k++];
  }
  return m;
}

template <class T>
std::vector<T> as_vector(const Record& r, DType want) {
  if (r.dtype != want || r.dims.size() != 1) throw DataError("record " + r.name + " has the wrong type");
  std::vector<T> v(r.dims[0]);
  if (!v.empty()) std::memcpy(v.data(), r.bytes.data(), r.bytes.size());
  return v;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

}  // namespace

Checkpoint snapshot(const ParamStore& store, const OptimizerState* opt) {
  Checkpoint c;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Tensor& t = store.at(i);
    c.params.push_back({t.name, t.value});
    if (opt && opt->m.size() == store.size()) {
      c.adam_m.push_back({t.name, opt->m[i]});
      c.adam_v.push_back({t.name, opt->v[i]});
    }
  }
  if (opt) c.optim_step = opt->step;
  return c;
}

void restore(ParamStore& store, const Checkpoint& ckpt, OptimizerState* opt) {
  std::map<std::string, const Matrix*> by_name;
  for (const auto& p : ckpt.params) by_name[p.name] = &p.value;
  for (auto& t : store.tensors()) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw DataError("checkpoint lacks parameter " + t.name);
    if (it->second->rows() != t.value.rows() || it->second->cols() != t.value.cols()) {
      throw DataError("shape mismatch for parameter " + t.name);
    }
    t.value = *it->second;
  }
  if (opt) {
    opt->reset(store);
    if (ckpt.adam_m.size() == store.size() && ckpt.adam_v.size() == store.size()) {
      for (std::size_t i = 0; i < store.size(); ++i) {
        opt->m[i] = ckpt.adam_m[i].value;
        opt->v[i] = ckpt.adam_v[i].value;
      }
      opt->step = ckpt.optim_step;
    }
  }
}

std::string serialize(const Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  binio::put_header(out, kCheckpointVersion);
  put_text(out, "meta/config", c.config_json);
  put_text(out, "meta/vocab", c.vocab_text);
  put_f64s(out, "meta/best", {c.best.dev_accuracy, static_cast<double>(c.best.phase),
                             static_cast<double>(c.best.epoch)});
  put_i64s(out, "rng", {static_cast<std::int64_t>(c.seed), c.rng_step});
  put_i64s(out, "optim/step", {c.optim_step});
  for (const auto& p : c.params) put_matrix(out, "param/" + p.name, p.value);
  for (const auto& p : c.adam_m) put_matrix(out, "optim.m/" + p.name, p.value);
  for (const auto& p : c.adam_v) put_matrix(out, "optim.v/" + p.name, p.value);
  return out.str();
}

Checkpoint deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  const auto version = binio::get_header(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  while (in.peek() != std::char_traits<char>::eof()) {
    Record r = get_record(in);
    if (r.name == "meta/config") {
      c.config_json = r.bytes;
    } else if (r.name == "meta/vocab") {
      c.vocab_text = r.bytes;
    } else if (r.name == "meta/best") {
      const auto v = as_vector<double>(r, DType::F64);
      if (v.size() != 3) throw DataError("malformed meta/best record");
      c.best = {v[0], static_cast<std::int32_t>(v[1]), static_cast<std::int32_t>(v[2])};
    } else if (r.name == "rng") {
      const auto v = as_vector<std::int64_t>(r, DType::I64);
      if (v.size() != 2) throw DataError("malformed rng record");
      c.seed = static_cast<std::uint64_t>(v[0]);
      c.rng_step = v[1];
    } else if (r.name == "optim/step") {
      const auto v = as_vector<std::int64_t>(r, DType::I64);
      if (v.size() != 1) throw DataError("malformed optim/step record");
      c.optim_step = v[0];
    } else if (starts_with(r.name, "param/")) {
      c.params.push_back({r.name.substr(6), as_matrix(r)});
    } else if (starts_with(r.name, "optim.m/")) {
      c.adam_m.push_back({r.name.substr(8), as_matrix(r)});
    } else if (starts_with(r.name, "optim.v/")) {
      c.adam_v.push_back({r.name.substr(8), as_matrix(r)});
    } else {
      throw DataError("unknown checkpoint record " + r.name);
    }
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::string bytes = serialize(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace kegat::trainkit
