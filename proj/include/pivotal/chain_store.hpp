#pragma once

// Datasets and MCMC chains for finite mixture models.
//
// Component labels stored in allocation vectors are 1-based (1..G) everywhere
// they are visible: in memory, in files and in reports. Positions used to
// index storage (iteration h, unit i, component c, coordinate k) are 0-based.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pivotal {

/// n x d matrix of observations, row-major.
class Dataset {
 public:
  Dataset() = default;
  Dataset(int units, int dim);
  Dataset(int units, int dim, std::vector<double> values);

  int units() const { return units_; }
  int dim() const { return dim_; }

  double operator()(int i, int k) const { return values_[index(i, k)]; }
  double& operator()(int i, int k) { return values_[index(i, k)]; }
  std::span<const double> row(int i) const {
    return {values_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
  }
  const std::vector<double>& values() const { return values_; }

  /// Throws std::invalid_argument unless n >= 1, d >= 1 and every value is finite.
  void validate() const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t index(int i, int k) const {
    return static_cast<std::size_t>(i) * dim_ + static_cast<std::size_t>(k);
  }

  int units_ = 0;
  int dim_ = 0;
  std::vector<double> values_;
};

struct ChainMeta {
  std::uint64_t seed = 0;
  std::string sampler;
  bool burnin_removed = true;
  // 0: phi is shared across components and is never permuted.
  // k > 0: phi holds k values per component, component-major (phi_size = G * k).
  int phi_per_component = 0;

  bool operator==(const ChainMeta&) const = default;
};

/// H draws of (z, mu, pi, phi) from a G-component mixture posterior.
class MixtureChain {
 public:
  MixtureChain() = default;
  MixtureChain(int iterations, int units, int components, int dim, int phi_size = 0);

  int iterations() const { return iterations_; }
  int units() const { return units_; }
  int components() const { return components_; }
  int dim() const { return dim_; }
  int phi_size() const { return phi_size_; }
  bool has_phi() const { return phi_size_ > 0; }

  int z(int h, int i) const { return z_[zi(h, i)]; }
  int& z(int h, int i) { return z_[zi(h, i)]; }
  std::span<const int> allocations(int h) const {
    return {z_.data() + static_cast<std::size_t>(h) * units_, static_cast<std::size_t>(units_)};
  }
  std::span<int> allocations(int h) {
    return {z_.data() + static_cast<std::size_t>(h) * units_, static_cast<std::size_t>(units_)};
  }

  double mu(int h, int c, int k) const { return mu_[mi(h, c, k)]; }
  double& mu(int h, int c, int k) { return mu_[mi(h, c, k)]; }
  std::span<const double> mean(int h, int c) const {
    return {mu_.data() + mi(h, c, 0), static_cast<std::size_t>(dim_)};
  }

  double pi(int h, int c) const { return pi_[pi_index(h, c)]; }
  double& pi(int h, int c) { return pi_[pi_index(h, c)]; }
  std::span<const double> weights(int h) const {
    return {pi_.data() + pi_index(h, 0), static_cast<std::size_t>(components_)};
  }

  double phi(int h, int j) const { return phi_[phi_index(h, j)]; }
  double& phi(int h, int j) { return phi_[phi_index(h, j)]; }
  std::span<const double> dispersion(int h) const {
    return {phi_.data() + phi_index(h, 0), static_cast<std::size_t>(phi_size_)};
  }

  const std::vector<int>& raw_z() const { return z_; }
  const std::vector<double>& raw_mu() const { return mu_; }
  const std::vector<double>& raw_pi() const { return pi_; }
  const std::vector<double>& raw_phi() const { return phi_; }

  ChainMeta meta;

  /// Applies a relabelling to iteration h: raw component `from[g]` (0-based) becomes
  /// component g of the result. Units whose raw component is not listed get label 0,
  /// which callers must avoid. Used by every relabeller.
  void permute_iteration(int h, std::span<const int> from);

  /// Keeps iterations in `keep` (0-based, increasing) and rebuilds with `new_components`
  /// components, taking new component g from raw component maps[h][g]. When
  /// components are dropped the kept weights are renormalized to sum to one.
  MixtureChain select(std::span<const int> keep, int new_components,
                      std::span<const std::vector<int>> maps) const;

  bool operator==(const MixtureChain&) const = default;

 private:
  std::size_t zi(int h, int i) const {
    return static_cast<std::size_t>(h) * units_ + static_cast<std::size_t>(i);
  }
  std::size_t mi(int h, int c, int k) const {
    return (static_cast<std::size_t>(h) * components_ + static_cast<std::size_t>(c)) * dim_ +
           static_cast<std::size_t>(k);
  }
  std::size_t pi_index(int h, int c) const {
    return static_cast<std::size_t>(h) * components_ + static_cast<std::size_t>(c);
  }
  std::size_t phi_index(int h, int j) const {
    return static_cast<std::size_t>(h) * phi_size_ + static_cast<std::size_t>(j);
  }

  int iterations_ = 0;
  int units_ = 0;
  int components_ = 0;
  int dim_ = 0;
  int phi_size_ = 0;
  std::vector<int> z_;
  std::vector<double> mu_;
  std::vector<double> pi_;
  std::vector<double> phi_;
};

/// One failed invariant. `iteration` and `unit` are 0-based positions or -1.
struct Violation {
  int iteration = -1;
  int unit = -1;
  std::string field;
  std::string message;
};

std::vector<Violation> validate_chain(const MixtureChain& chain);
std::string describe(const Violation& v);

/// Raised by load_chain. `record` is the 0-based line index (0 is the header).
class ChainFormatError : public std::runtime_error {
 public:
  ChainFormatError(std::size_t record, std::string field, const std::string& what);
  std::size_t record() const { return record_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t record_;
  std::string field_;
};

MixtureChain load_chain(const std::filesystem::path& path);
void save_chain(const MixtureChain& chain, const std::filesystem::path& path);

/// Formats a double with 17 significant digits, the serialization used by every writer.
std::string format_real(double x);

}  // namespace pivotal
