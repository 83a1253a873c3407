#pragma once

// Checkpoint file layout (text, one record per line):
//
//   pabee-checkpoint 1
//   config.input_dim=<int>
//   config.hidden_dim=<int>
//   config.num_layers=<int>
//   config.task=classification|regression
//   config.num_classes=<int>
//   config.nonlinearity=tanh|relu
//   config.seed=<uint64>
//   array <name> <count>
//   <count values, whitespace separated, hexadecimal floating point>
//   ... one array block per parameter array, in for_each_array() order ...
//   end
//
// Values are written with std::to_chars(hex) so a save/load round trip is
// bit-exact.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "pabee/errors.hpp"
#include "pabee/model.hpp"

namespace pabee {

inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& os, const ModelParams& p) {
  const auto& c = p.config;
  os << "pabee-checkpoint " << kCheckpointVersion << '\n'
     << "config.input_dim=" << c.input_dim << '\n'
     << "config.hidden_dim=" << c.hidden_dim << '\n'
     << "config.num_layers=" << c.num_layers << '\n'
     << "config.task=" << to_string(c.task) << '\n'
     << "config.num_classes=" << c.num_classes << '\n'
     << "config.nonlinearity=" << to_string(c.nonlinearity) << '\n'
     << "config.seed=" << c.seed << '\n';
  char buf[64];
  for_each_array(p, [&](const std::string& name, std::span<const double> values) {
    os << "array " << name << ' ' << values.size() << '\n';
    for (std::size_t i = 0; i < values.size(); ++i) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, values[i], std::chars_format::hex);
      os.write(buf, end - buf);
      os.put((i + 1) % 8 == 0 || i + 1 == values.size() ? '\n' : ' ');
    }
  });
  os << "end\n";
}

namespace detail {

inline std::string expect_key(std::istream& is, const std::string& key) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("checkpoint truncated before " + key);
  const std::string prefix = key + "=";
  if (line.rfind(prefix, 0) != 0) throw IoError("checkpoint: expected " + key + ", got '" + line + "'");
  return line.substr(prefix.size());
}

template <class T>
T parse_number(const std::string& s, const std::string& key) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IoError("checkpoint: bad value for " + key + ": '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline ModelParams read_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "pabee-checkpoint") throw IoError("not a pabee checkpoint");
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  is.ignore(1);

  StackConfig c;
  c.input_dim = detail::parse_number<std::size_t>(detail::expect_key(is, "config.input_dim"), "input_dim");
  c.hidden_dim = detail::parse_number<std::size_t>(detail::expect_key(is, "config.hidden_dim"), "hidden_dim");
  c.num_layers = detail::parse_number<std::size_t>(detail::expect_key(is, "config.num_layers"), "num_layers");
  const auto task = detail::expect_key(is, "config.task");
  if (task == "classification") {
    c.task = Task::classification;
  } else if (task == "regression") {
    c.task = Task::regression;
  } else {
    throw IoError("checkpoint: unknown task '" + task + "'");
  }
  c.num_classes = detail::parse_number<std::size_t>(detail::expect_key(is, "config.num_classes"), "num_classes");
  const auto nl = detail::expect_key(is, "config.nonlinearity");
  if (nl == "tanh") {
    c.nonlinearity = Nonlinearity::tanh;
  } else if (nl == "relu") {
    c.nonlinearity = Nonlinearity::relu;
  } else {
    throw IoError("checkpoint: unknown nonlinearity '" + nl + "'");
  }
  c.seed = detail::parse_number<std::uint64_t>(detail::expect_key(is, "config.seed"), "seed");

  ModelParams p;
  try {
    p = ModelParams::zeros(c);
  } catch (const ValidationError& e) {
    throw IoError(std::string("checkpoint: invalid config: ") + e.what());
  }
  for_each_array(p, [&](const std::string& name, std::span<double> dst) {
    std::string tag, got_name;
    std::size_t count = 0;
    if (!(is >> tag >> got_name >> count) || tag != "array") throw IoError("checkpoint: expected array " + name);
    if (got_name != name || count != dst.size()) {
      throw IoError("checkpoint: expected array " + name + " of " + std::to_string(dst.size()) +
                    " values, got " + got_name + " of " + std::to_string(count));
    }
    std::string tok;
    for (double& v : dst) {
      if (!(is >> tok)) throw IoError("checkpoint truncated in " + name);
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, std::chars_format::hex);
      if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw IoError("checkpoint: bad value '" + tok + "' in " + name);
      }
    }
  });
  std::string end;
  if (!(is >> end) || end != "end") throw IoError("checkpoint: missing end marker");
  return p;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, p);
  if (!os) throw IoError("failed writing " + path.string());
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace pabee
