#pragma once

// Self-describing checkpoint container: a diffable text header (format
// version, config key=value lines, tensor manifest) followed by raw
// little-endian tensor payloads.
//
//   LDGCKPT 1
//   config key=value
//   tensor <name> <param|buffer> <f32|f64> <shape> <byte offset>
//   DATA
//   <payload>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ldg/nn.hpp"

namespace ldg {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

template <class S>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() { return "f32"; }
template <>
inline const char* dtype_name<double>() { return "f64"; }

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TensorEntry {
  std::string name, kind, dtype;
  Shape shape;
  std::uint64_t offset = 0;
};

struct Checkpoint {
  std::map<std::string, std::string> config;
  std::vector<TensorEntry> entries;
  std::vector<std::byte> payload;

  const TensorEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

template <class S>
void save_checkpoint(const std::string& path,
                     const std::map<std::string, std::string>& config,
                     const ParamList<S>& tensors) {
  std::ostringstream head;
  head << "LDGCKPT 1\n";
  for (const auto& [k, v] : config) head << "config " << k << "=" << v << "\n";
  std::uint64_t off = 0;
  for (const auto& t : tensors) {
    head << "tensor " << t.name << ' ' << (t.is_param ? "param" : "buffer") << ' '
         << dtype_name<S>() << ' ' << shape_str(t.tensor.shape()) << ' ' << off << '\n';
    off += static_cast<std::uint64_t>(t.tensor.numel()) * sizeof(S);
  }
  head << "DATA\n";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path);
  f << head.str();
  for (const auto& t : tensors)
    f.write(reinterpret_cast<const char*>(t.tensor.data()),
            static_cast<std::streamsize>(t.tensor.numel() * static_cast<std::int64_t>(sizeof(S))));
  if (!f) throw CheckpointError("short write to checkpoint: " + path);
}

inline Shape parse_shape(const std::string& s) {
  if (s.size() < 2 || s.front() != '[' || s.back() != ']')
    throw CheckpointError("malformed shape string: " + s);
  Shape out;
  std::stringstream ss(s.substr(1, s.size() - 2));
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoll(tok));
  return out;
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path);
  Checkpoint ck;
  std::string line;
  if (!std::getline(f, line) || line != "LDGCKPT 1")
    throw CheckpointError("unsupported checkpoint header: \"" + line + "\"");
  while (std::getline(f, line)) {
    if (line == "DATA") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "config") {
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      auto eq = rest.find('=');
      if (eq == std::string::npos) throw CheckpointError("malformed config line: " + line);
      ck.config[rest.substr(0, eq)] = rest.substr(eq + 1);
    } else if (tag == "tensor") {
      TensorEntry e;
      std::string shape;
      ls >> e.name >> e.kind >> e.dtype >> shape >> e.offset;
      if (!ls) throw CheckpointError("malformed tensor line: " + line);
      e.shape = parse_shape(shape);
      ck.entries.push_back(std::move(e));
    } else {
      throw CheckpointError("unrecognized header line: " + line);
    }
  }
  std::string rest{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>{}};
  ck.payload.resize(rest.size());
  std::memcpy(ck.payload.data(), rest.data(), rest.size());
  return ck;
}

// Copies checkpoint values into an existing model's tensors. Every model
// tensor must be present with matching dtype and shape.
template <class S>
void load_into(const Checkpoint& ck, ParamList<S>& tensors) {
  for (auto& t : tensors) {
    const TensorEntry* e = ck.find(t.name);
    if (!e) throw CheckpointError("checkpoint is missing tensor " + t.name);
    if (e->dtype != dtype_name<S>())
      throw CheckpointError("dtype mismatch for " + t.name + ": checkpoint has " + e->dtype);
    if (e->shape != t.tensor.shape())
      throw CheckpointError("shape mismatch for " + t.name + ": checkpoint has " +
                            shape_str(e->shape) + ", model has " +
                            shape_str(t.tensor.shape()));
    std::size_t bytes = static_cast<std::size_t>(t.tensor.numel()) * sizeof(S);
    if (e->offset + bytes > ck.payload.size())
      throw CheckpointError("payload truncated at tensor " + t.name);
    std::memcpy(t.tensor.data(), ck.payload.data() + e->offset, bytes);
  }
}

}  // namespace ldg
