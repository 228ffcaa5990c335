#include "coolgp/synthetic.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "coolgp/errors.hpp"
#include "coolgp/kernel.hpp"

namespace coolgp {

namespace {

Matrix random_orthogonal(Eigen::Index dim, Rng& rng) {
  const Matrix g = standard_normal(rng, dim, dim);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
  // Fix column signs so the draw is unique given g.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

Matrix uniform_inputs(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = unif(rng);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "'");
  return value;
}

}  // namespace

SyntheticSpec SyntheticSpec::with_defaults(Eigen::Index dim, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.dim = dim;
  spec.seed = seed;
  Rng rng = make_rng(seed, "projections");
  spec.projection1 = 1.5 * random_orthogonal(dim, rng);
  spec.projection2 = 0.7 * random_orthogonal(dim, rng);
  return spec;
}

void SyntheticSpec::validate() const {
  if (dim < 1) throw ConfigError("synthetic dim must be >= 1");
  if (projection1.cols() != dim || projection2.cols() != dim ||
      projection1.rows() != projection2.rows() || projection1.rows() < 1)
    throw ConfigError("synthetic projections must share an output dimension and take dim inputs");
  if (block_size < 1) throw ConfigError("block_size must be >= 1");
  if (n_test < 1) throw ConfigError("n_test must be >= 1");
  if (!(signal_scale > 0.0) || noise_std < 0.0) throw ConfigError("invalid signal/noise scale");
  if (chunk_size < 1) throw ConfigError("chunk_size must be >= 1");
}

Vector sample_latent(const Matrix& points, double signal_scale, double jitter,
                     std::size_t chunk_size, Rng& rng) {
  const Eigen::Index n = points.rows();
  const double s2 = signal_scale * signal_scale;
  const Vector eps = standard_normal(rng, n, 1).col(0);
  Matrix lower = Matrix::Zero(n, n);
  const auto chunk = static_cast<Eigen::Index>(chunk_size);
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index len = std::min(chunk, n - start);
    Matrix cov = s2 * gram_uu(points.middleRows(start, len), points.middleRows(start, len));
    cov.diagonal().array() += jitter;
    if (start > 0) {
      // Cross factor L_IJ = K_IJ L_JJ^{-T}; the Schur complement is the
      // conditional covariance of this chunk given all earlier ones.
      const Matrix cross = s2 * gram_uu(points.middleRows(start, len), points.topRows(start));
      const Matrix lij = lower.topLeftCorner(start, start)
                             .triangularView<Eigen::Lower>()
                             .solve(cross.transpose())
                             .transpose();
      lower.block(start, 0, len, start) = lij;
      cov.noalias() -= lij * lij.transpose();
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success)
      throw FactorizationError("pooled latent covariance is not positive definite; use a larger "
                               "jitter or fewer points");
    lower.block(start, start, len, len) = llt.matrixL();
  }
  return lower.triangularView<Eigen::Lower>() * eps;
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  const auto per_stream = static_cast<Eigen::Index>(spec.blocks_per_stream * spec.block_size);
  const auto n_test1 = static_cast<Eigen::Index>((spec.n_test + 1) / 2);
  const auto n_test2 = static_cast<Eigen::Index>(spec.n_test) - n_test1;

  Rng input_rng = make_rng(spec.seed, "inputs");
  const Matrix x1 = uniform_inputs(input_rng, per_stream, spec.dim);
  const Matrix x2 = uniform_inputs(input_rng, per_stream, spec.dim);
  const Matrix t1 = uniform_inputs(input_rng, n_test1, spec.dim);
  const Matrix t2 = uniform_inputs(input_rng, n_test2, spec.dim);

  const Eigen::Index q = spec.projection1.rows();
  Matrix pooled(2 * per_stream + n_test1 + n_test2, q);
  pooled << x1 * spec.projection1.transpose(), x2 * spec.projection2.transpose(),
      t1 * spec.projection1.transpose(), t2 * spec.projection2.transpose();

  Rng latent_rng = make_rng(spec.seed, "latent");
  const Vector f = sample_latent(pooled, spec.signal_scale, spec.jitter, spec.chunk_size, latent_rng);

  Rng noise_rng = make_rng(spec.seed, "noise");
  const Vector noise = spec.noise_std * standard_normal(noise_rng, 2 * per_stream, 1).col(0);

  SyntheticData data;
  const auto bs = static_cast<Eigen::Index>(spec.block_size);
  for (std::size_t b = 0; b < spec.blocks_per_stream; ++b) {
    const Eigen::Index off = static_cast<Eigen::Index>(b) * bs;
    data.latent1.push_back(f.segment(off, bs));
    data.stream1.push_back({x1.middleRows(off, bs), f.segment(off, bs) + noise.segment(off, bs)});
    data.latent2.push_back(f.segment(per_stream + off, bs));
    data.stream2.push_back({x2.middleRows(off, bs),
                            f.segment(per_stream + off, bs) + noise.segment(per_stream + off, bs)});
  }
  data.test.push_back({t1, f.segment(2 * per_stream, n_test1)});
  data.test.push_back({t2, f.segment(2 * per_stream + n_test1, n_test2)});
  return data;
}

void write_dataset(const std::vector<Block>& blocks, const std::filesystem::path& path,
                   Eigen::Index dim) {
  if (!blocks.empty()) dim = blocks.front().dim();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "block_id";
  for (Eigen::Index j = 1; j <= dim; ++j) out << ",x" << j;
  out << ",y\n";
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Block& block = blocks[b];
    if (block.dim() != dim || block.inputs.rows() != block.targets.size())
      throw ContractViolation("block " + std::to_string(b) + " has inconsistent shape");
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      out << b;
      for (Eigen::Index j = 0; j < dim; ++j) out << ',' << format_double(block.inputs(i, j));
      out << ',' << format_double(block.targets(i)) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

std::vector<Block> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing header");
  const auto header = split(line);
  if (header.size() < 2 || header.front() != "block_id" || header.back() != "y")
    throw ParseError("line 1: header must be block_id,x1,...,xd,y");
  const std::size_t dim = header.size() - 2;
  for (std::size_t j = 0; j < dim; ++j)
    if (header[j + 1] != "x" + std::to_string(j + 1))
      throw ParseError("line 1: expected column x" + std::to_string(j + 1));

  std::map<std::size_t, std::vector<std::vector<double>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != dim + 2)
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 2) +
                       " fields, found " + std::to_string(fields.size()));
    const auto id = parse_number<std::size_t>(fields[0], line_no);
    std::vector<double> values(dim + 1);
    for (std::size_t j = 0; j <= dim; ++j) values[j] = parse_number<double>(fields[j + 1], line_no);
    rows[id].push_back(std::move(values));
  }

  std::vector<Block> blocks;
  for (const auto& [id, entries] : rows) {
    Block block{Matrix(static_cast<Eigen::Index>(entries.size()), static_cast<Eigen::Index>(dim)),
                Vector(static_cast<Eigen::Index>(entries.size()))};
    for (std::size_t i = 0; i < entries.size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j)
        block.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = entries[i][j];
      block.targets(static_cast<Eigen::Index>(i)) = entries[i][dim];
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

Block concatenate(const std::vector<Block>& blocks) {
  if (blocks.empty()) return {};
  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.size();
  Block out{Matrix(total, blocks.front().dim()), Vector(total)};
  Eigen::Index row = 0;
  for (const auto& b : blocks) {
    if (b.dim() != out.inputs.cols()) throw ContractViolation("concatenate: dimension mismatch");
    out.inputs.middleRows(row, b.size()) = b.inputs;
    out.targets.segment(row, b.size()) = b.targets;
    row += b.size();
  }
  return out;
}

}  // namespace coolgp
