#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace echelon {

// Binary checkpoint container: a versioned bag of named double matrices and
// named scalars. Doubles are stored as raw little-endian bytes, so a
// save/load round trip is bit exact.
class CheckpointWriter {
 public:
  void put(const std::string& name, const Eigen::MatrixXd& m) {
    mats_[name] = m;
  }
  void put(const std::string& name, const Eigen::VectorXd& v) {
    mats_[name] = v;
  }
  void put_scalar(const std::string& name, double v) { scalars_[name] = v; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_u64(out, kVersion);
    write_u64(out, mats_.size());
    for (const auto& [name, m] : mats_) {
      write_str(out, name);
      write_u64(out, static_cast<std::uint64_t>(m.rows()));
      write_u64(out, static_cast<std::uint64_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    write_u64(out, scalars_.size());
    for (const auto& [name, v] : scalars_) {
      write_str(out, name);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
  }

 private:
  static constexpr const char* kMagic = "ECHCKPT\0";
  static constexpr std::uint64_t kVersion = 1;

  static void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_str(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  std::map<std::string, Eigen::MatrixXd> mats_;
  std::map<std::string, double> scalars_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 7) != "ECHCKPT")
      throw std::runtime_error("not a checkpoint file: " + path);
    const std::uint64_t version = read_u64(in);
    if (version != 1)
      throw std::runtime_error("unsupported checkpoint version");
    const std::uint64_t n_mats = read_u64(in);
    for (std::uint64_t i = 0; i < n_mats; ++i) {
      const std::string name = read_str(in);
      const auto rows = static_cast<Eigen::Index>(read_u64(in));
      const auto cols = static_cast<Eigen::Index>(read_u64(in));
      Eigen::MatrixXd m(rows, cols);
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
      mats_[name] = std::move(m);
    }
    const std::uint64_t n_scalars = read_u64(in);
    for (std::uint64_t i = 0; i < n_scalars; ++i) {
      const std::string name = read_str(in);
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      scalars_[name] = v;
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  }

  const Eigen::MatrixXd& mat(const std::string& name) const {
    auto it = mats_.find(name);
    if (it == mats_.end())
      throw std::runtime_error("checkpoint missing array: " + name);
    return it->second;
  }
  Eigen::VectorXd vec(const std::string& name) const {
    const Eigen::MatrixXd& m = mat(name);
    if (m.cols() != 1)
      throw std::runtime_error("checkpoint array is not a vector: " + name);
    return m.col(0);
  }
  double scalar(const std::string& name) const {
    auto it = scalars_.find(name);
    if (it == scalars_.end())
      throw std::runtime_error("checkpoint missing scalar: " + name);
    return it->second;
  }
  bool has(const std::string& name) const {
    return mats_.count(name) > 0 || scalars_.count(name) > 0;
  }

 private:
  static std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static std::string read_str(std::istream& in) {
    const std::uint64_t n = read_u64(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    return s;
  }

  std::map<std::string, Eigen::MatrixXd> mats_;
  std::map<std::string, double> scalars_;
};

// Minimal CSV emitter: header row first, then push rows of stringified cells.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot write csv: " + path);
    write_row_(header);
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> r;
    (r.push_back(to_cell(cells)), ...);
    write_row_(r);
  }

  void row_vec(const std::vector<std::string>& cells) { write_row_(cells); }

  static std::string to_cell(const std::string& s) { return s; }
  static std::string to_cell(const char* s) { return s; }
  static std::string to_cell(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }
  template <typename T>
  static std::string to_cell(const T& v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

 private:
  void write_row_(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw std::runtime_error("csv column not found: " + name);
  }
  double num(std::size_t row, const std::string& name) const {
    return std::stod(rows.at(row).at(static_cast<std::size_t>(col(name))));
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read csv: " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (first) {
      t.header = cells;
      first = false;
    } else {
      t.rows.push_back(cells);
    }
  }
  return t;
}

inline void ensure_dir(const std::string& path) {
  std::filesystem::create_directories(path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace echelon
