#include "spursever/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "spursever/error.hpp"
#include "spursever/keyvalue.hpp"
#include "spursever/testbed.hpp"

namespace spursever {

GroupWeights group_prevalence(const Dataset& train) {
  if (train.size() == 0) throw InputError("cannot compute prevalence of an empty dataset");
  GroupWeights w;
  for (const auto& s : train.samples()) w[s.group_id] += 1.0;
  for (auto& [g, v] : w) v /= static_cast<double>(train.size());
  return w;
}

double worst_group_accuracy(const std::map<std::uint32_t, GroupStats>& groups) {
  if (groups.empty()) throw InputError("no groups to evaluate");
  double m = std::numeric_limits<double>::infinity();
  for (const auto& [g, st] : groups) m = std::min(m, st.accuracy);
  return m;
}

double weighted_mean_accuracy(const std::map<std::uint32_t, GroupStats>& groups,
                              const GroupWeights& weights) {
  double num = 0.0, den = 0.0;
  for (const auto& [g, st] : groups) {
    auto it = weights.find(g);
    if (it == weights.end()) continue;
    num += it->second * st.accuracy;
    den += it->second;
  }
  if (!(den > 0.0)) throw InputError("group weights carry no mass on the evaluated groups");
  return num / den;
}

SpuriousRate spurious_misclassification(const Dataset& test,
                                        std::span<const std::uint32_t> predictions,
                                        std::uint32_t c1, std::uint32_t c2) {
  if (predictions.size() != test.size()) throw InputError("prediction count does not match test set");
  SpuriousRate r{c1, c2, 0, 0, 0.0};
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test.sample(i);
    if (s.label != c2 || !s.has_spurious) continue;
    ++r.total;
    if (predictions[i] == c1) ++r.hits;
  }
  if (r.total == 0)
    throw InputError("no class-" + std::to_string(c2) + " samples carry the spurious feature");
  r.rate = static_cast<double>(r.hits) / static_cast<double>(r.total);
  return r;
}

EvalReport evaluate_predictions(const Dataset& test, std::span<const std::uint32_t> predictions,
                                const GroupWeights& weights) {
  if (test.size() == 0) throw InputError("empty test set");
  if (predictions.size() != test.size()) throw InputError("prediction count does not match test set");
  double wsum = 0.0;
  for (const auto& [g, w] : weights) {
    if (!(w >= 0.0)) throw InputError("group weights must be non-negative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-6) throw InputError("group weights must sum to 1");

  EvalReport rep;
  const std::size_t C = test.classes();
  rep.confusion.assign(C, std::vector<std::size_t>(C, 0));
  std::size_t clean_total = 0, clean_correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test.sample(i);
    const auto p = predictions[i];
    if (p >= C) throw InputError("prediction out of class range");
    const bool ok = p == s.label;
    auto& g = rep.groups[s.group_id];
    ++g.total;
    g.correct += ok;
    ++rep.confusion[s.label][p];
    rep.correct += ok;
    if (!s.has_spurious) {
      ++clean_total;
      clean_correct += ok;
    }
  }
  rep.total = test.size();
  rep.overall_accuracy = static_cast<double>(rep.correct) / static_cast<double>(rep.total);
  rep.clean_accuracy = clean_total ? static_cast<double>(clean_correct) / static_cast<double>(clean_total) : 0.0;
  for (auto& [g, st] : rep.groups) st.accuracy = static_cast<double>(st.correct) / static_cast<double>(st.total);

  // Groups that carry training weight but have no test samples.
  for (const auto& [g, w] : weights)
    if (w > 0.0 && !rep.groups.contains(g))
      rep.warnings.push_back("group " + std::to_string(g) + " has no test samples; excluded");

  rep.worst_group_accuracy = std::numeric_limits<double>::infinity();
  for (const auto& [g, st] : rep.groups)
    if (st.accuracy < rep.worst_group_accuracy) {
      rep.worst_group_accuracy = st.accuracy;
      rep.worst_group = g;
    }
  rep.weighted_mean_accuracy = weighted_mean_accuracy(rep.groups, weights);
  // spurious_rates are filled by callers that know the (c1, c2) pair.
  return rep;
}

EvalReport evaluate_groups(const Network& net, const Dataset& test, const GroupWeights& weights,
                           kernels::Mode mode) {
  const auto features = test.normalized_features();
  const auto pred = predict(net, features, test.size(), mode);
  return evaluate_predictions(test, pred, weights);
}

double spurious_misclassification_rate(const Network& net, const Dataset& test, std::uint32_t c1,
                                       std::uint32_t c2, kernels::Mode mode) {
  const auto features = test.normalized_features();
  const auto pred = predict(net, features, test.size(), mode);
  return spurious_misclassification(test, pred, c1, c2).rate;
}

TrainingTracker::TrainingTracker(const Dataset& eval_set, GroupWeights weights, std::uint32_t c1,
                                 std::uint32_t c2, kernels::Mode mode)
    : eval_set_(&eval_set),
      features_(eval_set.normalized_features()),
      weights_(std::move(weights)),
      c1_(c1),
      c2_(c2),
      mode_(mode) {}

EpochHook TrainingTracker::hook() {
  return [this](const EpochRecord& rec, const Network& net) {
    const auto pred = predict(net, features_, eval_set_->size(), mode_);
    const auto rep = evaluate_predictions(*eval_set_, pred, weights_);
    const auto rate = spurious_misclassification(*eval_set_, pred, c1_, c2_);
    series_.push_back({rec.epoch, rate.rate, rep.worst_group_accuracy, rep.clean_accuracy});
  };
}

void save_eval_csv(const std::filesystem::path& path, const EvalReport& report,
                   const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "kind,key,correct,total,value\n";
  for (const auto& [g, st] : report.groups)
    out << "group," << g << ',' << st.correct << ',' << st.total << ',' << format_double(st.accuracy) << '\n';
  out << "summary,worst_group_accuracy,,," << format_double(report.worst_group_accuracy) << '\n';
  out << "summary,weighted_mean_accuracy,,," << format_double(report.weighted_mean_accuracy) << '\n';
  out << "summary,overall_accuracy," << report.correct << ',' << report.total << ','
      << format_double(report.overall_accuracy) << '\n';
  out << "summary,clean_accuracy,,," << format_double(report.clean_accuracy) << '\n';
  for (const auto& r : report.spurious_rates)
    out << "spurious_rate," << r.c1 << "->" << r.c2 << ',' << r.hits << ',' << r.total << ','
        << format_double(r.rate) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::string eval_to_json(const EvalReport& report) {
  nlohmann::json j;
  for (const auto& [g, st] : report.groups)
    j["groups"][std::to_string(g)] = {{"correct", st.correct}, {"total", st.total}, {"accuracy", st.accuracy}};
  j["worst_group_accuracy"] = report.worst_group_accuracy;
  j["worst_group"] = report.worst_group;
  j["weighted_mean_accuracy"] = report.weighted_mean_accuracy;
  j["overall_accuracy"] = report.overall_accuracy;
  j["clean_accuracy"] = report.clean_accuracy;
  j["correct"] = report.correct;
  j["total"] = report.total;
  j["confusion"] = report.confusion;
  j["spurious_rates"] = nlohmann::json::array();
  for (const auto& r : report.spurious_rates)
    j["spurious_rates"].push_back({{"c1", r.c1}, {"c2", r.c2}, {"hits", r.hits}, {"total", r.total}, {"rate", r.rate}});
  j["warnings"] = report.warnings;
  return j.dump(2);
}

}  // namespace spursever
