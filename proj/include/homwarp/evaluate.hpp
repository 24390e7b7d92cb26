#pragma once

// Mean corner error over a test set for single, hierarchical and sequence
// models, CSV reports, and the loss-weight sweep.

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "homwarp/cascade.hpp"
#include "homwarp/data.hpp"
#include "homwarp/error.hpp"
#include "homwarp/geometry.hpp"
#include "homwarp/parallel.hpp"
#include "homwarp/train.hpp"

namespace homwarp {

enum class EvalMode { Single, Hierarchical, Sequence };

inline const char* to_string(EvalMode m) {
  switch (m) {
    case EvalMode::Single: return "single";
    case EvalMode::Hierarchical: return "hierarchical";
    case EvalMode::Sequence: return "sequence";
  }
  return "?";
}

inline EvalMode parse_eval_mode(const std::string& s) {
  if (s == "single") return EvalMode::Single;
  if (s == "hierarchical") return EvalMode::Hierarchical;
  if (s == "sequence") return EvalMode::Sequence;
  throw Error(ErrorKind::InvalidArgument, "unknown mode '" + s + "'");
}

struct EvalRow {
  std::size_t index = 0;
  std::uint64_t image_index = 0;
  double corner_error = 0.0;
  std::array<double, 8> predicted{};
};

struct EvalReport {
  EvalMode mode = EvalMode::Single;
  std::vector<EvalRow> rows;
  double mean_error = 0.0;
};

namespace detail {

inline void finish_report(EvalReport& r) {
  double s = 0.0;
  for (const auto& row : r.rows) s += row.corner_error;
  r.mean_error = r.rows.empty() ? 0.0 : s / static_cast<double>(r.rows.size());
}

inline void require_nonempty(std::span<const SampleRecord> records) {
  if (records.empty()) throw Error(ErrorKind::EmptyCorpus, "test set is empty");
}

inline EvalRow make_row(std::size_t i, const SampleRecord& rec, const Homography3& pred) {
  return {i, rec.image_index, patch_corner_error(pred, rec.target(), rec.patch_a.width), pred.free_elements()};
}

}  // namespace detail

template <typename T>
EvalReport evaluate_single(const StagePredictor<T>& stage, std::span<const SampleRecord> records,
                           unsigned threads = 1) {
  detail::require_nonempty(records);
  EvalReport rep{EvalMode::Single, std::vector<EvalRow>(records.size()), 0.0};
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const SampleRecord& r = records[i];
    rep.rows[i] = detail::make_row(i, r, stage.predict(r.patch_a, r.patch_b, r.target()));
  });
  detail::finish_report(rep);
  return rep;
}

template <typename T>
EvalReport evaluate_sequence(std::span<const RegressorParams<T>> stages, std::span<const SampleRecord> records,
                             unsigned threads = 1) {
  detail::require_nonempty(records);
  EvalReport rep{EvalMode::Sequence, std::vector<EvalRow>(records.size()), 0.0};
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const SampleRecord& r = records[i];
    const auto out = sequence_forward(stages, r.patch_a.cast<T>(), r.patch_b.cast<T>());
    rep.rows[i] = detail::make_row(i, r, out.final_homography());
  });
  detail::finish_report(rep);
  return rep;
}

/// Needs the source images: every stage re-warps image_a.
template <typename T>
EvalReport evaluate_hierarchical(std::span<const StagePredictor<T>> stages, std::span<const SampleRecord> records,
                                 const ImageCorpus& corpus, unsigned threads = 1) {
  detail::require_nonempty(records);
  EvalReport rep{EvalMode::Hierarchical, std::vector<EvalRow>(records.size()), 0.0};
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t i = 0; i < records.size();) {
    std::size_t j = i + 1;
    while (j < records.size() && records[j].image_index == records[i].image_index) ++j;
    groups.emplace_back(i, j);
    i = j;
  }
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    const SourceImage img = corpus.load(records[groups[g].first].image_index);
    for (std::size_t i = groups[g].first; i < groups[g].second; ++i) {
      const SampleRecord& r = records[i];
      const auto res = hierarchical_infer(stages, img.image, r.patch_b, r.rect_x, r.rect_y, r.target());
      rep.rows[i] = detail::make_row(i, r, res.chain.composed);
    }
  });
  detail::finish_report(rep);
  return rep;
}

/// Error of always answering the identity.
inline double identity_baseline_error(std::span<const SampleRecord> records) {
  detail::require_nonempty(records);
  double s = 0.0;
  for (const auto& r : records)
    s += patch_corner_error(Homography3::identity(Frame::Normalized), r.target(), r.patch_a.width);
  return s / static_cast<double>(records.size());
}

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

inline void write_config_echo(std::ostream& out, const ConfigEcho& cfg) {
  for (const auto& [k, v] : cfg) out << "# " << k << " = " << v << '\n';
}

/// Published full-scale results, for context only; desk runs do not
/// reproduce them.
inline constexpr std::array<std::pair<const char*, double>, 5> kReferenceCornerErrors{{
    {"hierarchical 3-stage", 1.57},
    {"four-point regression baseline", 9.2},
    {"four-stage twin regression baseline", 3.91},
    {"sequence 2-stage", 2.14},
    {"hierarchical 2-stage", 2.6},
}};

inline void write_eval_csv(std::ostream& out, const EvalReport& rep, const ConfigEcho& cfg = {}) {
  write_config_echo(out, cfg);
  out << "index,image_index,corner_error_px,h11,h12,h13,h21,h22,h23,h31,h32\n";
  out.precision(17);
  for (const auto& row : rep.rows) {
    out << row.index << ',' << row.image_index << ',' << row.corner_error;
    for (double v : row.predicted) out << ',' << v;
    out << '\n';
  }
  out << "# mode = " << to_string(rep.mode) << '\n';
  out << "# mean_corner_error_px = " << rep.mean_error << '\n';
  for (const auto& [name, px] : kReferenceCornerErrors)
    out << "# reference_full_scale_px " << name << " = " << px << " (context only, not measured)\n";
}

// ---------------------------------------------------------------------------
// Loss-weight sweep

using WeightPair = std::pair<double, double>;  // (w2, w1)

inline std::vector<WeightPair> default_weight_pairs() {
  return {{1.0, 1.0}, {1.0, 10.0}, {1.0, 0.1}, {10.0, 1.0}, {0.1, 1.0}, {1.0, 0.0}};
}

struct SweepRow {
  double w2 = 0.0;
  double w1 = 0.0;
  double mean_error = 0.0;
};

/// One single-stage model per pair, same seed and budget.
template <typename T>
std::vector<SweepRow> loss_weight_sweep(std::span<const SampleRecord> train, std::span<const SampleRecord> test,
                                        const TrainConfig& cfg, const RegressorConfig& model,
                                        std::span<const WeightPair> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::InvalidArgument, "sweep needs at least one weight pair");
  const auto samples = to_train_samples<T>(train, cfg.supervised_fraction, cfg.seed);
  std::vector<SweepRow> out;
  for (const auto& [w2, w1] : pairs) {
    TrainConfig c = cfg;
    c.w2 = w2;
    c.w1 = w1;
    auto res = train_single(std::span<const TrainSample<T>>(samples), c, model);
    const auto stage = StagePredictor<T>::network(std::move(res.stages.front()));
    out.push_back({w2, w1, evaluate_single(stage, test, cfg.threads).mean_error});
  }
  return out;
}

inline void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, const ConfigEcho& cfg = {}) {
  write_config_echo(out, cfg);
  out << "weight_l2,weight_l1,mean_corner_error_px\n";
  out.precision(17);
  for (const auto& r : rows) out << r.w2 << ',' << r.w1 << ',' << r.mean_error << '\n';
}

}  // namespace homwarp
