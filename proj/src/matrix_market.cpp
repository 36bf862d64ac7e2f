#include "heatmpc/matrix_market.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "heatmpc/error.hpp"

namespace heatmpc::mm {
namespace {

void write_comment(std::ostream& os, const std::string& comment) {
  std::istringstream lines(comment);
  std::string line;
  while (std::getline(lines, line)) os << "% " << line << '\n';
}

std::ifstream open_checked(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("matrix market: cannot open " + path.string());
  return in;
}

std::string read_header(std::istream& in, const std::filesystem::path& path) {
  std::string banner;
  std::getline(in, banner);
  if (banner.rfind("%%MatrixMarket", 0) != 0) throw Error("matrix market: missing banner in " + path.string());
  std::string line;
  while (in.peek() == '%') std::getline(in, line);
  return banner;
}

}  // namespace

void write_text_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_sparse(const std::filesystem::path& path, const SpMat& a, const std::string& comment) {
  std::ostringstream os;
  os.precision(17);
  os << "%%MatrixMarket matrix coordinate real general\n";
  write_comment(os, comment);
  os << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  for (int k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it) os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
  write_text_atomic(path, os.str());
}

void write_dense(const std::filesystem::path& path, const Eigen::MatrixXd& a, const std::string& comment) {
  std::ostringstream os;
  os.precision(17);
  os << "%%MatrixMarket matrix array real general\n";
  write_comment(os, comment);
  os << a.rows() << ' ' << a.cols() << '\n';
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) os << a(i, j) << '\n';
  write_text_atomic(path, os.str());
}

SpMat read_sparse(const std::filesystem::path& path) {
  auto in = open_checked(path);
  const std::string banner = read_header(in, path);
  if (banner.find("coordinate") == std::string::npos) throw Error("matrix market: expected coordinate format");
  long rows = 0, cols = 0, nnz = 0;
  in >> rows >> cols >> nnz;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(nnz));
  for (long k = 0; k < nnz; ++k) {
    long i = 0, j = 0;
    double v = 0.0;
    if (!(in >> i >> j >> v)) throw Error("matrix market: truncated file " + path.string());
    t.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1), v);
  }
  SpMat a(rows, cols);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

Eigen::MatrixXd read_dense(const std::filesystem::path& path) {
  auto in = open_checked(path);
  const std::string banner = read_header(in, path);
  if (banner.find("array") == std::string::npos) throw Error("matrix market: expected array format");
  long rows = 0, cols = 0;
  in >> rows >> cols;
  Eigen::MatrixXd a(rows, cols);
  for (long j = 0; j < cols; ++j)
    for (long i = 0; i < rows; ++i)
      if (!(in >> a(i, j))) throw Error("matrix market: truncated file " + path.string());
  return a;
}

}  // namespace heatmpc::mm
