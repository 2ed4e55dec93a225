#pragma once

#include <span>
#include <vector>

namespace tastesim {

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Cosine with each norm clamped below at eps, so zero-norm inputs yield a
// finite value instead of NaN. Bitwise symmetric in its arguments.
double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         double eps = 1e-12);

double mean_of(std::span<const double> v);
double stddev_of(std::span<const double> v);  // population

struct Quartiles {
    double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
};
// Linear-interpolation quantiles over a copy of the data.
Quartiles quartiles_of(std::span<const double> v);

// Average ranks for ties.
std::vector<double> rank_values(std::span<const double> v);
double spearman_correlation(std::span<const double> x, std::span<const double> y);
// Tau-a over all pairs; ties contribute zero.
double kendall_tau(std::span<const double> x, std::span<const double> y);

}  // namespace tastesim
