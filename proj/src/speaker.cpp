#include "ossem/speaker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ossem/features.hpp"

namespace ossem {

namespace {

constexpr int kBands = kEmbeddingDim / 2;  // 96 triangular bands

std::vector<double> normalize(std::vector<double> v, const std::string& who) {
  double ss = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) throw std::runtime_error("embedding: non-finite value for " + who);
    ss += x * x;
  }
  if (ss == 0.0) throw std::runtime_error("embedding: zero vector for " + who);
  const double inv = 1.0 / std::sqrt(ss);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace

SpeakerEmbedding make_embedding(std::string speaker_id, std::vector<double> vec) {
  if (static_cast<int>(vec.size()) != kEmbeddingDim)
    throw std::invalid_argument("embedding: expected " + std::to_string(kEmbeddingDim) +
                                " dimensions, got " + std::to_string(vec.size()) + " for '" +
                                speaker_id + "'");
  return SpeakerEmbedding{std::move(speaker_id), normalize(std::move(vec), speaker_id)};
}

std::map<std::string, SpeakerEmbedding> load_embeddings(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("embedding: cannot open " + path);
  std::map<std::string, SpeakerEmbedding> out;
  std::string line;
  int row = 0;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id;
    if (!std::getline(ss, id, ',') || id.empty())
      throw std::runtime_error("embedding: malformed row " + std::to_string(row) + " in " + path);
    std::vector<double> vec;
    std::string field;
    while (std::getline(ss, field, ',')) {
      size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(field, &pos);
      } catch (const std::exception&) {
        throw std::runtime_error("embedding: row " + std::to_string(row) +
                                 " has a non-numeric field '" + field + "' in " + path);
      }
      if (pos != field.size())
        throw std::runtime_error("embedding: row " + std::to_string(row) +
                                 " has trailing junk in field '" + field + "' in " + path);
      vec.push_back(v);
    }
    if (static_cast<int>(vec.size()) != kEmbeddingDim)
      throw std::runtime_error("embedding: row " + std::to_string(row) + " has " +
                               std::to_string(vec.size()) + " values, expected " +
                               std::to_string(kEmbeddingDim) + " in " + path);
    if (out.count(id))
      throw std::runtime_error("embedding: duplicate speaker id '" + id + "' at row " +
                               std::to_string(row) + " in " + path);
    out.emplace(id, make_embedding(id, std::move(vec)));
  }
  return out;
}

void save_embeddings(const std::string& path,
                     const std::map<std::string, SpeakerEmbedding>& embs) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("embedding: cannot write " + path);
  f.precision(17);
  for (const auto& [id, e] : embs) {
    f << id;
    for (double v : e.vec) f << ',' << v;
    f << '\n';
  }
  if (!f) throw std::runtime_error("embedding: write failed for " + path);
}

SpeakerEmbedding builtin_embed(std::span<const double> wave, const std::string& speaker_id) {
  StftConfig cfg;  // 16 kHz, 512/256, hann
  if (wave.size() < static_cast<size_t>(cfg.sample_rate))
    throw std::invalid_argument("embedding: wave shorter than one second (" +
                                std::to_string(wave.size()) + " samples)");
  const Spectrogram spec = stft(wave, cfg);
  const int t_len = spec.frames, bins = spec.bins;
  std::vector<double> power(spec.mag.size());
  for (size_t i = 0; i < spec.mag.size(); ++i) power[i] = spec.mag[i] * spec.mag[i];

  // Triangular band weights over linear frequency: band b spans edge points
  // e[b]..e[b+2] with its peak at e[b+1]; 98 evenly spaced edges cover all bins.
  std::vector<double> edges(kBands + 2);
  for (int i = 0; i < kBands + 2; ++i)
    edges[static_cast<size_t>(i)] = static_cast<double>(i) * (bins - 1) / static_cast<double>(kBands + 1);
  std::vector<std::vector<std::pair<int, double>>> bands(kBands);
  for (int b = 0; b < kBands; ++b) {
    const double lo = edges[static_cast<size_t>(b)], mid = edges[static_cast<size_t>(b + 1)],
                 hi = edges[static_cast<size_t>(b + 2)];
    double wsum = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double fk = static_cast<double>(k);
      double w = 0.0;
      if (fk > lo && fk < hi) w = fk <= mid ? (fk - lo) / (mid - lo) : (hi - fk) / (hi - mid);
      if (w > 0.0) {
        bands[static_cast<size_t>(b)].emplace_back(k, w);
        wsum += w;
      }
    }
    if (bands[static_cast<size_t>(b)].empty())
      throw std::runtime_error("embedding: empty band (frame geometry too coarse)");
    for (auto& [k, w] : bands[static_cast<size_t>(b)]) w /= wsum;
  }

  // Per-frame band powers. Averaging in the linear domain lets the loud
  // (voiced) frames dominate, so the first half of the vector traces the
  // talker's spectral envelope rather than the silence floor.
  std::vector<std::vector<double>> bp(static_cast<size_t>(kBands),
                                      std::vector<double>(static_cast<size_t>(t_len), 0.0));
  double peak_bp = 0.0;
  for (int b = 0; b < kBands; ++b)
    for (int t = 0; t < t_len; ++t) {
      double acc = 0.0;
      for (const auto& [k, w] : bands[static_cast<size_t>(b)])
        acc += w * power[static_cast<size_t>(t) * bins + k];
      bp[static_cast<size_t>(b)][static_cast<size_t>(t)] = acc;
      peak_bp = std::max(peak_bp, acc);
    }
  if (peak_bp == 0.0) throw std::invalid_argument("embedding: silent input");

  // The floor tracks the utterance peak, so a global gain shifts every log
  // entry by the same constant; the mean removal and the std cancel it.
  const double floor = peak_bp * 1e-12;
  std::vector<double> vec(kEmbeddingDim, 0.0);
  std::vector<double> series(static_cast<size_t>(t_len));
  for (int b = 0; b < kBands; ++b) {
    double pmean = 0.0;
    for (int t = 0; t < t_len; ++t) {
      const double p = bp[static_cast<size_t>(b)][static_cast<size_t>(t)];
      pmean += p;
      series[static_cast<size_t>(t)] = std::log(p + floor);
    }
    pmean /= static_cast<double>(t_len);
    vec[static_cast<size_t>(b)] = std::log(pmean + floor);
    double m = 0.0;
    for (double v : series) m += v;
    m /= static_cast<double>(t_len);
    double var = 0.0;
    for (double v : series) var += (v - m) * (v - m);
    vec[static_cast<size_t>(kBands + b)] = std::sqrt(var / static_cast<double>(t_len));
  }
  // Every talker shares a smooth spectral tilt; removing the least-squares
  // line over band index from each half leaves the resonance bumps, which is
  // where the speakers actually differ.
  for (int half = 0; half < 2; ++half) {
    double* v = vec.data() + static_cast<size_t>(half) * kBands;
    const double n = static_cast<double>(kBands);
    double sy = 0.0, sby = 0.0;
    for (int b = 0; b < kBands; ++b) {
      sy += v[b];
      sby += static_cast<double>(b) * v[b];
    }
    const double sb = n * (n - 1.0) / 2.0, sbb = n * (n - 1.0) * (2.0 * n - 1.0) / 6.0;
    const double det = n * sbb - sb * sb;
    const double beta = (n * sby - sb * sy) / det;
    const double alpha = (sy - beta * sb) / n;
    for (int b = 0; b < kBands; ++b) v[b] -= alpha + beta * static_cast<double>(b);
  }
  return SpeakerEmbedding{speaker_id, normalize(std::move(vec), speaker_id)};
}

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.vec.size() != b.vec.size()) throw std::invalid_argument("embedding: dimension mismatch");
  double dot = 0.0;
  for (size_t i = 0; i < a.vec.size(); ++i) dot += a.vec[i] * b.vec[i];
  return dot;
}

}  // namespace ossem
