#pragma once

#include <span>
#include <vector>

namespace spursever::stats {

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> v);
/// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> v);
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace spursever::stats
