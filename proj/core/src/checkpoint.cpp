#include "sivcast/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sivcast/error.hpp"

namespace sivcast {

namespace {

constexpr const char* kMagic = "sivcast-checkpoint";
constexpr int kFormatVersion = 1;

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    throw DataError("checkpoint: malformed value '" + token + "'");
  }
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << kMagic << ' ' << kFormatVersion << '\n';
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint: metadata key/value must be single-line, key '" + k + "'");
    }
    out << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& p : ckpt.params) {
    out << "param " << p.name << ' ' << p.array.rank();
    for (auto d : p.array.shape()) out << ' ' << d;
    out << '\n';
    bool first = true;
    for (double v : p.array.values()) {
      if (!first) out << ' ';
      out << hex(v);
      first = false;
    }
    out << '\n';
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ckpt;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw DataError("checkpoint line " + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(in, line)) fail("empty file");
  ++lineno;
  {
    std::istringstream hs(line);
    std::string magic;
    int version = 0;
    hs >> magic >> version;
    if (magic != kMagic || version != kFormatVersion) fail("unrecognized header '" + line + "'");
  }
  bool ended = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.metadata[key] = value;
    } else if (kind == "param") {
      NamedParam p;
      std::size_t rank = 0;
      if (!(ls >> p.name >> rank)) fail("malformed param header");
      ad::Shape shape(rank);
      for (auto& d : shape) {
        if (!(ls >> d) || d == 0) fail("malformed shape for " + p.name);
      }
      if (!std::getline(in, line)) fail("missing values for " + p.name);
      ++lineno;
      std::istringstream vs(line);
      std::vector<double> values;
      values.reserve(ad::element_count(shape));
      std::string tok;
      while (vs >> tok) values.push_back(parse_hex(tok));
      if (values.size() != ad::element_count(shape)) {
        fail("expected " + std::to_string(ad::element_count(shape)) + " values for " +
             p.name + ", found " + std::to_string(values.size()));
      }
      p.array = ad::DArray::from_values(std::move(shape), std::move(values), true);
      ckpt.params.push_back(std::move(p));
    } else if (kind == "end") {
      ended = true;
      break;
    } else if (!kind.empty()) {
      fail("unknown record '" + kind + "'");
    }
  }
  if (!ended) throw DataError("checkpoint: truncated file (no end marker)");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

void assign_params(std::vector<NamedParam>& target, const std::vector<NamedParam>& source) {
  std::map<std::string, const ad::DArray*> by_name;
  for (const auto& p : source) by_name[p.name] = &p.array;
  for (auto& t : target) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw DataError("checkpoint is missing parameter " + t.name);
    const auto& src = *it->second;
    if (src.shape() != t.array.shape()) {
      throw DimensionError("checkpoint parameter " + t.name + " has shape " +
                           ad::to_string(src.shape()) + ", model expects " +
                           ad::to_string(t.array.shape()));
    }
    auto dst = t.array.mutable_values();
    std::copy(src.values().begin(), src.values().end(), dst.begin());
  }
}

}  // namespace sivcast
