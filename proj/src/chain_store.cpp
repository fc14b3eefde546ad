#include "pivotal/chain_store.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace pivotal {

using json = nlohmann::json;

Dataset::Dataset(int units, int dim)
    : units_(units), dim_(dim), values_(static_cast<std::size_t>(units) * dim, 0.0) {}

Dataset::Dataset(int units, int dim, std::vector<double> values)
    : units_(units), dim_(dim), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(units) * static_cast<std::size_t>(dim)) {
    throw std::invalid_argument("dataset: value count does not match n*d");
  }
}

void Dataset::validate() const {
  if (units_ < 1) throw std::invalid_argument("dataset: n must be >= 1");
  if (dim_ < 1) throw std::invalid_argument("dataset: d must be >= 1");
  for (std::size_t j = 0; j < values_.size(); ++j) {
    if (!std::isfinite(values_[j])) {
      throw std::invalid_argument(fmt::format("dataset: non-finite value at unit {} coordinate {}",
                                              j / dim_ + 1, j % dim_ + 1));
    }
  }
}

MixtureChain::MixtureChain(int iterations, int units, int components, int dim, int phi_size)
    : iterations_(iterations),
      units_(units),
      components_(components),
      dim_(dim),
      phi_size_(phi_size) {
  if (iterations < 0 || units < 0 || components < 0 || dim < 0 || phi_size < 0) {
    throw std::invalid_argument("chain: negative dimension");
  }
  const auto H = static_cast<std::size_t>(iterations);
  z_.assign(H * units, 1);
  mu_.assign(H * components * dim, 0.0);
  pi_.assign(H * components, components > 0 ? 1.0 / components : 0.0);
  phi_.assign(H * phi_size, 0.0);
}

void MixtureChain::permute_iteration(int h, std::span<const int> from) {
  if (static_cast<int>(from.size()) != components_) {
    throw std::invalid_argument("permute_iteration: map size must equal G");
  }
  std::vector<int> to_new(components_, 0);
  for (int g = 0; g < components_; ++g) to_new[from[g]] = g + 1;
  for (int& label : allocations(h)) label = to_new[label - 1];

  std::vector<double> old_mu(mu_.begin() + mi(h, 0, 0), mu_.begin() + mi(h, 0, 0) + components_ * dim_);
  std::vector<double> old_pi(pi_.begin() + pi_index(h, 0), pi_.begin() + pi_index(h, 0) + components_);
  for (int g = 0; g < components_; ++g) {
    for (int k = 0; k < dim_; ++k) mu(h, g, k) = old_mu[from[g] * dim_ + k];
    pi(h, g) = old_pi[from[g]];
  }
  const int block = meta.phi_per_component;
  if (block > 0) {
    std::vector<double> old_phi(phi_.begin() + phi_index(h, 0), phi_.begin() + phi_index(h, 0) + phi_size_);
    for (int g = 0; g < components_; ++g) {
      for (int j = 0; j < block; ++j) phi(h, g * block + j) = old_phi[from[g] * block + j];
    }
  }
}

MixtureChain MixtureChain::select(std::span<const int> keep, int new_components,
                                  std::span<const std::vector<int>> maps) const {
  if (keep.size() != maps.size()) throw std::invalid_argument("select: one map per kept iteration");
  const int block = meta.phi_per_component;
  const int new_phi = block > 0 ? new_components * block : phi_size_;
  MixtureChain out(static_cast<int>(keep.size()), units_, new_components, dim_, new_phi);
  out.meta = meta;

  std::vector<int> to_new(components_);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const int h = keep[r];
    const auto& from = maps[r];
    const int row = static_cast<int>(r);
    std::fill(to_new.begin(), to_new.end(), 0);
    for (int g = 0; g < new_components; ++g) to_new[from[g]] = g + 1;
    for (int i = 0; i < units_; ++i) {
      const int label = to_new[z(h, i) - 1];
      if (label == 0) throw std::logic_error("select: unit allocated to a dropped component");
      out.z(row, i) = label;
    }
    double kept_weight = 0.0;
    for (int g = 0; g < new_components; ++g) {
      for (int k = 0; k < dim_; ++k) out.mu(row, g, k) = mu(h, from[g], k);
      out.pi(row, g) = pi(h, from[g]);
      kept_weight += out.pi(row, g);
    }
    // Dropped components take their weight with them; renormalize over the rest.
    if (new_components < components_ && kept_weight > 0.0) {
      for (int g = 0; g < new_components; ++g) out.pi(row, g) /= kept_weight;
    }
    if (block > 0) {
      for (int g = 0; g < new_components; ++g) {
        for (int j = 0; j < block; ++j) out.phi(row, g * block + j) = phi(h, from[g] * block + j);
      }
    } else {
      for (int j = 0; j < phi_size_; ++j) out.phi(row, j) = phi(h, j);
    }
  }
  return out;
}

std::vector<Violation> validate_chain(const MixtureChain& chain) {
  std::vector<Violation> out;
  const int G = chain.components();
  if (chain.iterations() < 1) out.push_back({-1, -1, "H", "chain has no iterations"});
  if (chain.units() < 1) out.push_back({-1, -1, "n", "chain has no units"});
  if (G < 1) out.push_back({-1, -1, "G", "chain has no components"});
  if (chain.dim() < 1) out.push_back({-1, -1, "d", "mean dimension must be >= 1"});
  const int block = chain.meta.phi_per_component;
  if (block > 0 && chain.phi_size() != G * block) {
    out.push_back({-1, -1, "phi", fmt::format("per-component phi needs {} values, chain has {}",
                                             G * block, chain.phi_size())});
  }
  for (int h = 0; h < chain.iterations(); ++h) {
    for (int i = 0; i < chain.units(); ++i) {
      const int label = chain.z(h, i);
      if (label < 1 || label > G) {
        out.push_back({h, i, "z", fmt::format("label {} outside 1..{}", label, G)});
      }
    }
    double sum = 0.0;
    bool finite = true;
    for (int g = 0; g < G; ++g) {
      const double w = chain.pi(h, g);
      if (!std::isfinite(w)) finite = false;
      if (w < 0.0) out.push_back({h, -1, "pi", fmt::format("negative weight for component {}", g + 1)});
      sum += w;
    }
    if (!finite) {
      out.push_back({h, -1, "pi", "non-finite weight"});
    } else if (std::abs(sum - 1.0) > 1e-8) {
      out.push_back({h, -1, "pi", fmt::format("weights sum to {} (expected 1)", sum)});
    }
    for (int g = 0; g < G; ++g) {
      for (int k = 0; k < chain.dim(); ++k) {
        if (!std::isfinite(chain.mu(h, g, k))) {
          out.push_back({h, -1, "mu", fmt::format("non-finite mean for component {}", g + 1)});
        }
      }
    }
    for (int j = 0; j < chain.phi_size(); ++j) {
      if (!std::isfinite(chain.phi(h, j))) out.push_back({h, -1, "phi", "non-finite dispersion"});
    }
  }
  return out;
}

std::string describe(const Violation& v) {
  std::string where;
  if (v.iteration >= 0) where += fmt::format("iteration {}", v.iteration + 1);
  if (v.unit >= 0) where += fmt::format("{}unit {}", where.empty() ? "" : ", ", v.unit + 1);
  if (where.empty()) return fmt::format("{}: {}", v.field, v.message);
  return fmt::format("{} ({}): {}", v.field, where, v.message);
}

ChainFormatError::ChainFormatError(std::size_t record, std::string field, const std::string& what)
    : std::runtime_error(fmt::format("chain file record {} field '{}': {}", record, field, what)),
      record_(record),
      field_(std::move(field)) {}

std::string format_real(double x) { return fmt::format("{:.17g}", x); }

namespace {

int header_int(const json& header, const char* key, bool required, int fallback) {
  auto it = header.find(key);
  if (it == header.end()) {
    if (required) throw ChainFormatError(0, key, "missing");
    return fallback;
  }
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw ChainFormatError(0, key, "must be a non-negative integer");
  }
  return it->get<int>();
}

double read_real(const json& v, std::size_t record, const char* field) {
  if (!v.is_number()) throw ChainFormatError(record, field, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ChainFormatError(record, field, "non-finite value");
  return x;
}

const json& require_array(const json& rec, const char* field, std::size_t size, std::size_t record) {
  auto it = rec.find(field);
  if (it == rec.end()) throw ChainFormatError(record, field, "missing");
  if (!it->is_array()) throw ChainFormatError(record, field, "expected an array");
  if (it->size() != size) {
    throw ChainFormatError(record, field,
                           fmt::format("dimension mismatch: expected {} entries, found {}", size, it->size()));
  }
  return *it;
}

}  // namespace

MixtureChain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open chain file '{}'", path.string()));

  std::string line;
  if (!std::getline(in, line)) throw ChainFormatError(0, "header", "empty file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ChainFormatError(0, "header", e.what());
  }
  if (!header.is_object()) throw ChainFormatError(0, "header", "expected a JSON object");

  const int n = header_int(header, "n", true, 0);
  const int G = header_int(header, "G", true, 0);
  const int d = header_int(header, "d", true, 0);
  const int H = header_int(header, "H", true, 0);
  const int p = header_int(header, "p", false, 0);
  if (n < 1 || G < 1 || d < 1) throw ChainFormatError(0, "header", "n, G and d must be positive");

  MixtureChain chain(H, n, G, d, p);
  if (auto it = header.find("meta"); it != header.end() && it->is_object()) {
    const json& m = *it;
    chain.meta.seed = m.value("seed", std::uint64_t{0});
    chain.meta.sampler = m.value("sampler", std::string{});
    chain.meta.burnin_removed = m.value("burnin_removed", true);
    chain.meta.phi_per_component = m.value("phi_per_component", 0);
  }

  int h = 0;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.empty()) continue;
    if (h >= H) throw ChainFormatError(record, "iter", fmt::format("more records than declared H={}", H));
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ChainFormatError(record, "record", e.what());
    }
    if (!rec.is_object()) throw ChainFormatError(record, "record", "expected a JSON object");

    auto iter = rec.find("iter");
    if (iter == rec.end()) throw ChainFormatError(record, "iter", "missing");
    if (!iter->is_number_integer() || iter->get<long long>() != h + 1) {
      throw ChainFormatError(record, "iter", fmt::format("expected iteration {}", h + 1));
    }

    const json& z = require_array(rec, "z", static_cast<std::size_t>(n), record);
    for (int i = 0; i < n; ++i) {
      if (!z[i].is_number_integer()) throw ChainFormatError(record, "z", "labels must be integers");
      const long long label = z[i].get<long long>();
      if (label < 1 || label > G) {
        throw ChainFormatError(record, "z",
                               fmt::format("label out of range: unit {} has label {} (G={})", i + 1, label, G));
      }
      chain.z(h, i) = static_cast<int>(label);
    }

    const json& mu = require_array(rec, "mu", static_cast<std::size_t>(G), record);
    for (int g = 0; g < G; ++g) {
      if (!mu[g].is_array() || mu[g].size() != static_cast<std::size_t>(d)) {
        throw ChainFormatError(record, "mu", fmt::format("dimension mismatch: component {} needs {} values", g + 1, d));
      }
      for (int k = 0; k < d; ++k) chain.mu(h, g, k) = read_real(mu[g][k], record, "mu");
    }

    const json& pi = require_array(rec, "pi", static_cast<std::size_t>(G), record);
    for (int g = 0; g < G; ++g) chain.pi(h, g) = read_real(pi[g], record, "pi");

    if (p > 0) {
      const json& phi = require_array(rec, "phi", static_cast<std::size_t>(p), record);
      for (int j = 0; j < p; ++j) chain.phi(h, j) = read_real(phi[j], record, "phi");
    } else if (rec.contains("phi")) {
      throw ChainFormatError(record, "phi", "present but header declares p=0");
    }
    ++h;
  }
  if (h != H) throw ChainFormatError(record, "H", fmt::format("declared {} iterations, found {}", H, h));

  const auto violations = validate_chain(chain);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw ChainFormatError(v.iteration >= 0 ? static_cast<std::size_t>(v.iteration) + 1 : 0, v.field,
                           describe(v));
  }
  return chain;
}

void save_chain(const MixtureChain& chain, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write chain file '{}'", path.string()));

  json meta = {{"seed", chain.meta.seed},
               {"sampler", chain.meta.sampler},
               {"burnin_removed", chain.meta.burnin_removed},
               {"phi_per_component", chain.meta.phi_per_component}};
  out << fmt::format(R"({{"n":{},"G":{},"d":{},"H":{},"p":{},"meta":{}}})", chain.units(),
                     chain.components(), chain.dim(), chain.iterations(), chain.phi_size(), meta.dump())
      << '\n';

  std::string buf;
  for (int h = 0; h < chain.iterations(); ++h) {
    buf.clear();
    fmt::format_to(std::back_inserter(buf), R"({{"iter":{},"z":[)", h + 1);
    for (int i = 0; i < chain.units(); ++i) {
      fmt::format_to(std::back_inserter(buf), "{}{}", i ? "," : "", chain.z(h, i));
    }
    buf += R"(],"mu":[)";
    for (int g = 0; g < chain.components(); ++g) {
      buf += g ? ",[" : "[";
      for (int k = 0; k < chain.dim(); ++k) {
        if (k) buf += ',';
        buf += format_real(chain.mu(h, g, k));
      }
      buf += ']';
    }
    buf += R"(],"pi":[)";
    for (int g = 0; g < chain.components(); ++g) {
      if (g) buf += ',';
      buf += format_real(chain.pi(h, g));
    }
    buf += ']';
    if (chain.has_phi()) {
      buf += R"(,"phi":[)";
      for (int j = 0; j < chain.phi_size(); ++j) {
        if (j) buf += ',';
        buf += format_real(chain.phi(h, j));
      }
      buf += ']';
    }
    buf += "}\n";
    out << buf;
  }
  if (!out) throw std::runtime_error(fmt::format("I/O failure writing '{}'", path.string()));
}

}  // namespace pivotal
