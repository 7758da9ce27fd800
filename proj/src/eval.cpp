#include "fingerdiff/eval.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "fingerdiff/errors.hpp"

namespace fingerdiff {

double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw NumericError("auc: both score lists must be nonempty");

  // Rank-sum with average ranks for ties; numerator is an exact multiple of
  // 0.5 so the result matches direct pair counting bit for bit.
  struct Entry {
    double score;
    bool is_pos;
  };
  std::vector<Entry> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) {
    if (!std::isfinite(s)) throw NumericError("auc: non-finite positive score");
    all.push_back({s, true});
  }
  for (double s : neg) {
    if (!std::isfinite(s)) throw NumericError("auc: non-finite negative score");
    all.push_back({s, false});
  }
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  double rank_sum_pos = 0.0;  // 1-based average ranks
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (all[k].is_pos) rank_sum_pos += avg_rank;
    i = j;
  }

  const double p = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

std::vector<PairSpec> build_pairs(const std::vector<const VideoRecord*>& records,
                                  const std::string& target_id, std::string* skip_reason) {
  std::vector<std::size_t> self_videos, cross_videos;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i]->target_id != target_id) continue;
    if (records[i]->is_self_reenactment())
      self_videos.push_back(i);
    else
      cross_videos.push_back(i);
  }

  if (self_videos.size() < 2) {
    if (skip_reason)
      *skip_reason = "fewer than 2 self-reenactment videos (" +
                     std::to_string(self_videos.size()) + ")";
    return {};
  }
  if (cross_videos.empty()) {
    if (skip_reason) *skip_reason = "no cross-reenactment videos onto this target";
    return {};
  }
  if (skip_reason) skip_reason->clear();

  std::vector<PairSpec> pairs;
  for (std::size_t i = 0; i < self_videos.size(); ++i)
    for (std::size_t j = i + 1; j < self_videos.size(); ++j)
      pairs.push_back({self_videos[i], self_videos[j], true});
  for (std::size_t s : self_videos)
    for (std::size_t c : cross_videos) pairs.push_back({s, c, false});
  return pairs;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? dot / denom : 0.0;
}

}  // namespace

EvalReport evaluate(const Manifest& manifest, const EmbedFn& embed, const EvalOptions& opts) {
  const std::vector<const VideoRecord*> records = manifest.records_in(opts.split);
  if (records.empty())
    throw DataError(std::string("evaluate: split '") + split_name(opts.split) +
                    "' has no records");

  EvalReport report;
  report.condition = opts.condition;
  report.clip_length = static_cast<int>(opts.clip_length);
  report.config_hash = opts.config_hash;

  // Each video embedded exactly once.
  std::vector<std::vector<double>> embeddings(records.size());
  const std::int64_t n_records = static_cast<std::int64_t>(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n_records; ++i)
    embeddings[static_cast<std::size_t>(i)] = embed(*records[static_cast<std::size_t>(i)]);

  std::set<std::string> targets;
  for (const auto* rec : records) targets.insert(rec->target_id);

  std::set<std::string> generators;
  if (opts.per_generator)
    for (const auto* rec : records) generators.insert(rec->generator);
  std::map<std::string, std::vector<double>> per_gen_values;

  double sum_auc = 0.0;
  for (const auto& target : targets) {
    std::string skip_reason;
    const auto pairs = build_pairs(records, target, &skip_reason);
    if (pairs.empty()) {
      report.skipped_targets.push_back(target);
      report.notes.push_back("target '" + target + "' skipped: " + skip_reason);
      continue;
    }
    std::vector<double> pos, neg;
    for (const auto& pr : pairs) {
      const double s = cosine(embeddings[pr.a], embeddings[pr.b]);
      (pr.is_positive ? pos : neg).push_back(s);
    }
    const double target_auc = auc(pos, neg);
    report.per_target_auc[target] = target_auc;
    sum_auc += target_auc;

    for (const auto& gen : generators) {
      std::vector<double> gpos, gneg;
      for (const auto& pr : pairs) {
        if (records[pr.a]->generator != gen || records[pr.b]->generator != gen) continue;
        const double s = cosine(embeddings[pr.a], embeddings[pr.b]);
        (pr.is_positive ? gpos : gneg).push_back(s);
      }
      if (!gpos.empty() && !gneg.empty()) per_gen_values[gen].push_back(auc(gpos, gneg));
    }
  }

  if (report.per_target_auc.empty())
    throw DataError("evaluate: zero evaluable targets in split");
  report.mean_auc = sum_auc / static_cast<double>(report.per_target_auc.size());

  for (const auto& [gen, values] : per_gen_values)
    report.per_generator_auc[gen] =
        std::accumulate(values.begin(), values.end(), 0.0) /
        static_cast<double>(values.size());

  return report;
}

}  // namespace fingerdiff
