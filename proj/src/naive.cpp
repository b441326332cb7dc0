#include "avsd/naive.hpp"

#include <cmath>
#include <limits>

namespace avsd::naive {

namespace {

const Matrix& param(const ParameterSet& ps, const std::string& name) { return ps.at(name).value; }

std::size_t rows(const Grid& g) { return g.size(); }
std::size_t cols(const Grid& g) { return g.empty() ? 0 : g[0].size(); }

Grid zeros(std::size_t r, std::size_t c) { return Grid(r, std::vector<double>(c, 0.0)); }

Grid affine(const Grid& x, const Matrix& w, const Matrix* b) {
  Grid out = zeros(rows(x), static_cast<std::size_t>(w.cols()));
  for (std::size_t i = 0; i < rows(x); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double s = b ? (*b)(0, j) : 0.0;
      for (std::size_t k = 0; k < cols(x); ++k) s += x[i][k] * w(static_cast<Eigen::Index>(k), j);
      out[i][static_cast<std::size_t>(j)] = s;
    }
  }
  return out;
}

Grid linear(const ParameterSet& ps, const std::string& p, const Grid& x) {
  return affine(x, param(ps, p + "/w"), &param(ps, p + "/b"));
}

Grid norm(const ParameterSet& ps, const std::string& p, const Grid& x) {
  const Matrix& g = param(ps, p + "/gain");
  const Matrix& b = param(ps, p + "/bias");
  Grid out = x;
  const double n = static_cast<double>(cols(x));
  for (std::size_t i = 0; i < rows(x); ++i) {
    double mu = 0.0;
    for (double v : x[i]) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : x[i]) var += (v - mu) * (v - mu);
    var /= n;
    const double sd = std::sqrt(var + 1e-5);
    for (std::size_t k = 0; k < cols(x); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      out[i][k] = g(0, kk) * (x[i][k] - mu) / sd + b(0, kk);
    }
  }
  return out;
}

Grid plus(const Grid& a, const Grid& b) {
  Grid out = a;
  for (std::size_t i = 0; i < rows(a); ++i) {
    for (std::size_t k = 0; k < cols(a); ++k) out[i][k] += b[i][k];
  }
  return out;
}

Grid ffn(const ParameterSet& ps, const std::string& p, const Grid& x) {
  Grid h = linear(ps, p + "/1", x);
  for (auto& row : h) {
    for (double& v : row) v = v > 0.0 ? v : 0.0;
  }
  return linear(ps, p + "/2", h);
}

Grid attention(const ParameterSet& ps, const std::string& p, const Grid& query, const Grid& memory, int heads,
               bool causal) {
  const Grid q = linear(ps, p + "/q", query);
  const Grid k = affine(memory, param(ps, p + "/k/w"), nullptr);
  const Grid v = linear(ps, p + "/v", memory);
  const std::size_t width = cols(q);
  const std::size_t dh = width / static_cast<std::size_t>(heads);
  Grid joined = zeros(rows(q), width);
  for (int h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * dh;
    for (std::size_t i = 0; i < rows(q); ++i) {
      const std::size_t visible = causal ? i + 1 : rows(k);
      std::vector<double> score(visible);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < visible; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q[i][off + c] * k[j][off + c];
        score[j] = s / std::sqrt(static_cast<double>(dh));
        if (score[j] > mx) mx = score[j];
      }
      double z = 0.0;
      for (double& s : score) {
        s = std::exp(s - mx);
        z += s;
      }
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < visible; ++j) acc += score[j] / z * v[j][off + c];
        joined[i][off + c] = acc;
      }
    }
  }
  return linear(ps, p + "/o", joined);
}

}  // namespace

Grid to_grid(const Matrix& m) {
  Grid g = zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  }
  return g;
}

double max_abs_diff(const Grid& a, const Matrix& b) {
  if (rows(a) != static_cast<std::size_t>(b.rows()) || cols(a) != static_cast<std::size_t>(b.cols())) {
    return std::numeric_limits<double>::infinity();
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      worst = std::max(worst, std::abs(a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - b(i, j)));
    }
  }
  return worst;
}

std::pair<Grid, Grid> encoder_block(const ParameterSet& ps, const std::string& b, const Grid& audio,
                                    const Grid& visual, int heads) {
  const Grid na = norm(ps, b + "/ln_self_a", audio);
  const Grid a1 = plus(audio, attention(ps, b + "/self_a", na, na, heads, false));
  const Grid nv = norm(ps, b + "/ln_self_v", visual);
  const Grid v1 = plus(visual, attention(ps, b + "/self_v", nv, nv, heads, false));

  const Grid a2 = plus(a1, attention(ps, b + "/cross_a", norm(ps, b + "/ln_cross_a", a1), v1, heads, false));
  const Grid v2 = plus(v1, attention(ps, b + "/cross_v", norm(ps, b + "/ln_cross_v", v1), a1, heads, false));

  return {plus(a2, ffn(ps, b + "/ff_a", norm(ps, b + "/ln_ff_a", a2))),
          plus(v2, ffn(ps, b + "/ff_v", norm(ps, b + "/ln_ff_v", v2)))};
}

Grid decoder_block(const ParameterSet& ps, const std::string& b, const Grid& y, const Grid& audio,
                   const Grid& visual, const Grid& caption, const model::DecoderConfig& cfg) {
  const Grid y1 = plus(y, attention(ps, b + "/self", norm(ps, b + "/ln_self", y), norm(ps, b + "/ln_self", y),
                                    cfg.heads, true));
  std::vector<Grid> branch;
  branch.push_back(plus(y1, attention(ps, b + "/src_a", norm(ps, b + "/ln_src_a", y1), audio, cfg.heads, false)));
  branch.push_back(plus(y1, attention(ps, b + "/src_v", norm(ps, b + "/ln_src_v", y1), visual, cfg.heads, false)));
  if (cfg.use_caption) {
    branch.push_back(plus(y1, attention(ps, b + "/src_c", norm(ps, b + "/ln_src_c", y1), caption, cfg.heads, false)));
  }
  const std::size_t T = rows(y), d = cols(y), J = branch.size();

  if (cfg.fusion == model::FusionMode::concat) {
    Grid mean = zeros(T, d), cat = zeros(T, d * J);
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t c = 0; c < d; ++c) {
          mean[i][c] += branch[j][i][c] / static_cast<double>(J);
          cat[i][j * d + c] = branch[j][i][c];
        }
      }
    }
    return plus(mean, ffn(ps, b + "/ff", norm(ps, b + "/ln_ff", cat)));
  }

  const Grid q = linear(ps, b + "/fuse/q", norm(ps, b + "/ln_fuse", y1));
  Grid fused = zeros(T, d);
  std::vector<Grid> keys;
  for (const Grid& br : branch) keys.push_back(affine(br, param(ps, b + "/fuse/k/w"), nullptr));
  for (std::size_t i = 0; i < T; ++i) {
    std::vector<double> s(J);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < J; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * keys[j][i][c];
      s[j] = dot / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (double& v : s) {
      v = std::exp(v - mx);
      z += v;
    }
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t c = 0; c < d; ++c) fused[i][c] += s[j] / z * branch[j][i][c];
    }
  }
  return plus(fused, ffn(ps, b + "/ff", norm(ps, b + "/ln_ff", fused)));
}

}  // namespace avsd::naive
