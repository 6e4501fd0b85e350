#pragma once

#include "evop/common.hpp"
#include "evop/trajectory.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace evop {

static_assert(std::endian::native == std::endian::little,
              "binary trajectory format is little-endian");

enum class TrajectoryFormat { csv, binary };

inline TrajectoryFormat format_from_name(const std::string& name) {
  if (name == "csv") return TrajectoryFormat::csv;
  if (name == "binary" || name == "bin") return TrajectoryFormat::binary;
  throw std::invalid_argument("unknown trajectory format '" + name + "'");
}

// Infers the format from the file extension (.csv -> csv, else binary).
inline TrajectoryFormat format_from_path(const std::filesystem::path& p) {
  return p.extension() == ".csv" ? TrajectoryFormat::csv
                                 : TrajectoryFormat::binary;
}

namespace detail {

constexpr char kMagic[4] = {'E', 'V', 'O', 'P'};
constexpr std::uint32_t kBinaryVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::invalid_argument("binary trajectory: truncated " + what);
  return v;
}

}  // namespace detail

// CSV: header row `x0,x1,...`, one state per line, shortest round-trip
// decimals (save -> load is value-exact).
inline void save_trajectory_csv(const Trajectory& traj,
                                const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  for (Index j = 0; j < traj.dim(); ++j) {
    os << (j ? "," : "") << "x" << j;
  }
  os << "\n";
  for (Index i = 0; i < traj.length(); ++i) {
    for (Index j = 0; j < traj.dim(); ++j) {
      if (j) os << ",";
      os << format_double(traj.states()(i, j));
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline Trajectory load_trajectory_csv(const std::filesystem::path& path,
                                      double dt = 1.0) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(is, line)) {
    throw std::invalid_argument(path.string() + ": empty file (missing header)");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = s.find(',', start);
      out.push_back(s.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  };

  const auto header = split(line);
  const Index dim = static_cast<Index>(header.size());
  for (const auto& name : header) {
    if (name.empty()) {
      throw std::invalid_argument(path.string() + ": malformed header '" + line + "'");
    }
  }

  std::vector<double> values;
  Index rows = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    ++rows;
    if (static_cast<Index>(fields.size()) != dim) {
      throw std::invalid_argument(
          path.string() + ": row " + std::to_string(rows) + " has " +
          std::to_string(fields.size()) + " columns, expected " +
          std::to_string(dim));
    }
    for (Index j = 0; j < dim; ++j) {
      double v = 0.0;
      try {
        v = Rng::parse_double(fields[static_cast<std::size_t>(j)]);
      } catch (const std::invalid_argument&) {
        throw std::invalid_argument(path.string() + ": row " +
                                    std::to_string(rows) + ", column " +
                                    std::to_string(j) + ": bad number '" +
                                    fields[static_cast<std::size_t>(j)] + "'");
      }
      if (!std::isfinite(v)) {
        throw std::invalid_argument(path.string() + ": row " +
                                    std::to_string(rows) + ", column " +
                                    std::to_string(j) + ": non-finite value");
      }
      values.push_back(v);
    }
  }
  if (rows < 2) {
    throw std::invalid_argument(path.string() + ": need at least 2 states, got " +
                                std::to_string(rows));
  }
  Matrix states(rows, dim);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < dim; ++j) {
      states(i, j) = values[static_cast<std::size_t>(i * dim + j)];
    }
  }
  return Trajectory(std::move(states), dt,
                    nlohmann::json{{"source", path.string()}});
}

// Binary: magic "EVOP", u32 version, u32 n_steps, u32 dim, f64 dt, then
// row-major f64 payload. Little-endian throughout.
inline void save_trajectory_binary(const Trajectory& traj,
                                   const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(detail::kMagic, 4);
  detail::write_raw(os, detail::kBinaryVersion);
  detail::write_raw(os, static_cast<std::uint32_t>(traj.length()));
  detail::write_raw(os, static_cast<std::uint32_t>(traj.dim()));
  detail::write_raw(os, traj.dt());
  for (Index i = 0; i < traj.length(); ++i) {
    for (Index j = 0; j < traj.dim(); ++j) {
      detail::write_raw(os, traj.states()(i, j));
    }
  }
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline Trajectory load_trajectory_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot open '" + path.string() + "'");
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, detail::kMagic, 4) != 0) {
    throw std::invalid_argument(path.string() + ": not an EVOP trajectory file");
  }
  const auto version = detail::read_raw<std::uint32_t>(is, "version");
  if (version != detail::kBinaryVersion) {
    throw std::invalid_argument(path.string() + ": unsupported version " +
                                std::to_string(version));
  }
  const auto n_steps = detail::read_raw<std::uint32_t>(is, "n_steps");
  const auto dim = detail::read_raw<std::uint32_t>(is, "dim");
  const auto dt = detail::read_raw<double>(is, "dt");
  if (n_steps < 2 || dim < 1) {
    throw std::invalid_argument(path.string() + ": bad shape " +
                                std::to_string(n_steps) + " x " +
                                std::to_string(dim));
  }
  Matrix states(static_cast<Index>(n_steps), static_cast<Index>(dim));
  for (Index i = 0; i < states.rows(); ++i) {
    for (Index j = 0; j < states.cols(); ++j) {
      const double v = detail::read_raw<double>(is, "payload");
      if (!std::isfinite(v)) {
        throw std::invalid_argument(path.string() + ": row " + std::to_string(i) +
                                    ", column " + std::to_string(j) +
                                    ": non-finite value");
      }
      states(i, j) = v;
    }
  }
  return Trajectory(std::move(states), dt,
                    nlohmann::json{{"source", path.string()}});
}

inline void save_trajectory(const Trajectory& traj,
                            const std::filesystem::path& path,
                            TrajectoryFormat format) {
  if (format == TrajectoryFormat::csv) {
    save_trajectory_csv(traj, path);
  } else {
    save_trajectory_binary(traj, path);
  }
}

inline Trajectory load_trajectory(const std::filesystem::path& path,
                                  TrajectoryFormat format, double dt = 1.0) {
  return format == TrajectoryFormat::csv ? load_trajectory_csv(path, dt)
                                         : load_trajectory_binary(path);
}

}  // namespace evop
