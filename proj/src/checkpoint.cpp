#include "bnav/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bnav/errors.hpp"

namespace bnav {

namespace {

constexpr const char* kMagic = "bnav-checkpoint 1";

void put_double(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double get_double(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

bool has_space(const std::string& s) { return s.find_first_of(" \t\r\n") != std::string::npos; }

}  // namespace

const std::string& Checkpoint::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw ValidationError("checkpoint has no '" + key + "' entry");
  return it->second;
}

const Eigen::MatrixXd& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  if (meta != other.meta || vocab != other.vocab || tensors.size() != other.tensors.size()) return false;
  for (auto a = tensors.begin(), b = other.tensors.begin(); a != tensors.end(); ++a, ++b) {
    if (a->first != b->first || a->second.rows() != b->second.rows() || a->second.cols() != b->second.cols())
      return false;
    if (std::memcmp(a->second.data(), b->second.data(), sizeof(double) * a->second.size()) != 0) return false;
  }
  return true;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out = std::string(kMagic) + "\n";
  for (const auto& [k, v] : ckpt.meta) {
    if (k.empty() || has_space(k) || v.find('\n') != std::string::npos)
      throw ValidationError("checkpoint meta entry '" + k + "' cannot be serialized");
    out += "meta " + k + " " + v + "\n";
  }
  out += "vocab " + std::to_string(ckpt.vocab.size()) + "\n";
  for (const auto& t : ckpt.vocab) {
    if (t.empty() || has_space(t)) throw ValidationError("vocabulary token '" + t + "' cannot be serialized");
    out += t + "\n";
  }
  for (const auto& [name, m] : ckpt.tensors) {
    if (has_space(name)) throw ValidationError("tensor name '" + name + "' cannot be serialized");
    out += "tensor " + name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  }
  out += "data\n";
  for (const auto& [name, m] : ckpt.tensors)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_double(out, m(r, c));

  const auto tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  std::size_t pos = 0, lineno = 0;
  auto next_line = [&]() -> std::string {
    auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw ParseError(lineno + 1, "truncated manifest");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    return line;
  };
  if (next_line() != kMagic) throw ParseError(1, "not a checkpoint file");

  std::vector<std::pair<std::string, std::pair<long, long>>> shapes;
  for (;;) {
    const std::string line = next_line();
    if (line == "data") break;
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "meta") {
      std::string key;
      ss >> key;
      std::string value;
      std::getline(ss, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ck.meta[key] = value;
    } else if (kind == "vocab") {
      std::size_t n = 0;
      if (!(ss >> n)) throw ParseError(lineno, "bad vocab count");
      for (std::size_t i = 0; i < n; ++i) ck.vocab.push_back(next_line());
    } else if (kind == "tensor") {
      std::string name;
      long r = -1, c = -1;
      if (!(ss >> name >> r >> c) || r < 0 || c < 0) throw ParseError(lineno, "bad tensor header");
      shapes.push_back({name, {r, c}});
    } else {
      throw ParseError(lineno, "unknown record '" + kind + "'");
    }
  }

  for (const auto& [name, shape] : shapes) {
    const auto [r, c] = shape;
    const std::size_t need = static_cast<std::size_t>(r * c) * 8;
    if (bytes.size() - pos < need) throw ParseError("tensor '" + name + "' data is truncated");
    Eigen::MatrixXd m(r, c);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < c; ++j) m(i, j) = get_double(p + 8 * (i * c + j));
    pos += need;
    ck.tensors.emplace(name, std::move(m));
  }
  if (pos != bytes.size()) throw ParseError("trailing bytes after tensor data");
  return ck;
}

}  // namespace bnav
