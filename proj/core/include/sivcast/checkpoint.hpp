#pragma once

// Portable text checkpoints. Values are written as hexadecimal floating
// point literals so a write/read cycle reproduces every bit.
//
//   sivcast-checkpoint 1
//   meta <key> <value...>
//   param <name> <rank> <dim0> ... <dimN-1>
//   <hex value> <hex value> ...          (one line, row-major)
//   end

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "sivcast/autodiff.hpp"

namespace sivcast {

struct NamedParam {
  std::string name;
  ad::DArray array;
};

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<NamedParam> params;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values from `source` into `target` by name. Every target name must be
/// present with an identical shape.
void assign_params(std::vector<NamedParam>& target, const std::vector<NamedParam>& source);

}  // namespace sivcast
