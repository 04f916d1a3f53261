#include "mars/diversity/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "mars/core/errors.hpp"
#include "mars/core/rng.hpp"

namespace mars::diversity {

int ClusterProfile::total() const { return std::accumulate(sizes.begin(), sizes.end(), 0); }

void ClusterProfile::validate() const {
    if (sizes.empty()) throw InvalidArgument("cluster profile is empty");
    for (int s : sizes)
        if (s < 1) throw InvalidArgument("cluster sizes must be positive");
}

namespace {

// Exact C(a, k) while it fits in 64 bits.
std::optional<std::uint64_t> exact_choose(int a, int k) {
    if (k < 0 || k > a) return 0;
    k = std::min(k, a - k);
    unsigned __int128 c = 1;
    for (int i = 0; i < k; ++i) {
        c = c * static_cast<unsigned>(a - i) / static_cast<unsigned>(i + 1);
        if (c > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
    }
    return static_cast<std::uint64_t>(c);
}

// 1 - C(a, k) / C(n, k) for a <= n. Exact integer binomials give a correctly
// rounded quotient; larger inputs fall back to the product form.
double one_minus_choose_ratio(int a, int n, int k) {
    if (a < k) return 1.0;
    const auto top = exact_choose(a, k), bottom = exact_choose(n, k);
    if (top && bottom) return static_cast<double>(*bottom - *top) / static_cast<double>(*bottom);
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= static_cast<double>(a - i) / static_cast<double>(n - i);
    return 1.0 - r;
}

}  // namespace

double pass_at_k(int n, int c, int k) {
    if (n < 1 || k < 1 || k > n) throw InvalidArgument("pass@k needs 1 <= k <= n");
    if (c < 0 || c > n) throw InvalidArgument("pass@k needs 0 <= c <= n");
    return one_minus_choose_ratio(n - c, n, k);
}

double da_at_k(const ClusterProfile& profile, int k) {
    profile.validate();
    const int n = profile.total();
    if (k < 1 || k > n) throw InvalidArgument("DA@K needs 1 <= K <= N");
    double sum = 0.0;
    for (int s : profile.sizes) sum += one_minus_choose_ratio(n - s, n, k);
    return sum;
}

double ea(const ClusterProfile& profile) {
    profile.validate();
    const double n = profile.total();
    double h = 0.0;
    for (int s : profile.sizes) {
        const double p = s / n;
        h -= p * std::log(p);
    }
    return std::exp(h);
}

double naudc(const ClusterProfile& profile, int k_max) {
    profile.validate();
    if (k_max < 2) throw DegenerateDenominator("NAUADC needs K_max >= 2");
    if (k_max > profile.total()) throw InvalidArgument("NAUADC needs K_max <= N");
    double sum = 0.0;
    for (int k = 1; k <= k_max; ++k) sum += da_at_k(profile, k);
    return sum / (k_max - 1);
}

std::vector<int> dbscan(const std::vector<Vector>& points, double eps, int min_pts) {
    const std::size_t n = points.size();
    if (!(eps >= 0.0)) throw InvalidArgument("eps must be >= 0");
    if (min_pts < 1) throw InvalidArgument("min_pts must be >= 1");
    for (const auto& p : points)
        if (p.size() != points.front().size()) throw ShapeError("points differ in dimension");

    const double eps2 = eps * eps;
    std::vector<std::vector<std::size_t>> nbrs(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < points[i].size(); ++c) {
                const double d = points[i][c] - points[j][c];
                d2 += d * d;
            }
            if (d2 <= eps2) nbrs[i].push_back(j);
        }

    constexpr int kUnset = -2;
    std::vector<int> label(n, kUnset);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != kUnset) continue;
        if (static_cast<int>(nbrs[i].size()) < min_pts) {
            label[i] = -1;
            continue;
        }
        const int c = next++;
        label[i] = c;
        std::vector<std::size_t> frontier(nbrs[i].begin(), nbrs[i].end());
        while (!frontier.empty()) {
            const std::size_t q = frontier.back();
            frontier.pop_back();
            if (label[q] == -1) label[q] = c;  // border point
            if (label[q] != kUnset) continue;
            label[q] = c;
            if (static_cast<int>(nbrs[q].size()) >= min_pts)
                frontier.insert(frontier.end(), nbrs[q].begin(), nbrs[q].end());
        }
    }
    return label;
}

int count_clusters(const std::vector<Vector>& points, double eps, int min_pts) {
    const auto labels = dbscan(points, eps, min_pts);
    int clusters = 0;
    int noise = 0;
    for (int l : labels) {
        if (l < 0)
            ++noise;
        else
            clusters = std::max(clusters, l + 1);
    }
    return clusters + noise;
}

double aec(const std::vector<std::vector<Vector>>& per_task, double eps, int min_pts) {
    if (per_task.empty()) throw InvalidArgument("AEC needs at least one task");
    std::vector<int> counts(per_task.size());
    std::vector<std::string> errors(per_task.size());
    const auto n = static_cast<long>(per_task.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            if (per_task[k].empty()) throw InvalidArgument("AEC task has no solutions");
            counts[k] = count_clusters(per_task[k], eps, min_pts);
        } catch (const std::exception& ex) {
            errors[k] = ex.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw InvalidArgument(e);
    double sum = 0.0;
    for (int c : counts) sum += c;
    return sum / static_cast<double>(counts.size());
}

namespace {

Eigen::MatrixXd normalized_rows(const std::vector<Vector>& vectors, int& dropped) {
    dropped = 0;
    if (vectors.empty()) throw InvalidArgument("vector set is empty");
    const auto dim = vectors.front().size();
    std::vector<const Vector*> kept;
    for (const auto& v : vectors) {
        if (v.size() != dim) throw ShapeError("vectors differ in dimension");
        double norm2 = 0.0;
        for (double x : v) norm2 += x * x;
        if (norm2 == 0.0) {
            ++dropped;
            continue;
        }
        kept.push_back(&v);
    }
    if (kept.empty()) throw InvalidArgument("every vector is zero");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < kept.size(); ++r) {
        const auto& v = *kept[r];
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[c] / norm;
    }
    return m;
}

double vendi_of_rows(const Eigen::MatrixXd& rows) {
    const Eigen::MatrixXd gram = rows * rows.transpose() / static_cast<double>(rows.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd ev = solver.eigenvalues();
    const double trace = ev.sum();
    if (!(trace > 0.0)) return 1.0;
    double h = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        const double l = ev[i] / trace;
        if (l > 0.0) h -= l * std::log(l);
    }
    return std::exp(h);
}

// Standard normal via Box-Muller on the portable uniform draw.
double std_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace

GVendiResult g_vendi(const std::vector<Vector>& vectors, int proj_dim, std::uint64_t seed) {
    if (proj_dim < 1) throw InvalidArgument("proj_dim must be >= 1");
    GVendiResult out;
    const Eigen::MatrixXd rows = normalized_rows(vectors, out.dropped);
    Rng rng = derive_stream(seed, "g-vendi-projection");
    Eigen::MatrixXd proj(rows.cols(), proj_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(proj_dim));
    for (Eigen::Index c = 0; c < proj.cols(); ++c)
        for (Eigen::Index r = 0; r < proj.rows(); ++r) proj(r, c) = std_normal(rng) * scale;
    out.score = vendi_of_rows(rows * proj);
    return out;
}

double vendi_exact(const std::vector<Vector>& vectors) {
    int dropped = 0;
    return vendi_of_rows(normalized_rows(vectors, dropped));
}

Partition cluster_by_equivalence(std::size_t n, const EquivalenceOracle& oracle) {
    for (std::size_t i = 0; i < n; ++i)
        if (!oracle(i, i)) throw InvalidArgument("equivalence oracle is not reflexive at " + std::to_string(i));
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool a = oracle(i, j);
            if (a != oracle(j, i))
                throw InvalidArgument("equivalence oracle is not symmetric on (" + std::to_string(i) + ", " +
                                      std::to_string(j) + ")");
            if (a) parent[find(j)] = find(i);
        }
    Partition out;
    out.labels.assign(n, -1);
    std::vector<int> root_label(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = find(i);
        if (root_label[r] < 0) {
            root_label[r] = static_cast<int>(out.profile.sizes.size());
            out.profile.sizes.push_back(0);
        }
        out.labels[i] = root_label[r];
        ++out.profile.sizes[static_cast<std::size_t>(root_label[r])];
    }
    return out;
}

ClusterProfile profile_from_labels(const std::vector<std::string>& labels) {
    std::map<std::string, std::size_t> slot;
    ClusterProfile p;
    for (const auto& l : labels) {
        auto [it, fresh] = slot.emplace(l, p.sizes.size());
        if (fresh) p.sizes.push_back(0);
        ++p.sizes[it->second];
    }
    return p;
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

}  // namespace

std::map<std::string, VectorFileEntry> read_vectors(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || !line.starts_with("task_id,kind")) throw FormatError("vectors file needs header task_id,kind,values...");
    std::map<std::string, VectorFileEntry> out;
    int ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() < 3) throw FormatError("vectors line " + std::to_string(ln) + ": no values");
        if (cells[1] != "embedding" && cells[1] != "gradient")
            throw FormatError("vectors line " + std::to_string(ln) + ": kind must be embedding or gradient");
        auto& entry = out[cells[0]];
        if (entry.kind.empty()) entry.kind = cells[1];
        if (entry.kind != cells[1]) throw FormatError("vectors line " + std::to_string(ln) + ": mixed kinds in one task");
        Vector v;
        for (std::size_t i = 2; i < cells.size(); ++i) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(cells[i], &used));
                if (used != cells[i].size()) throw std::invalid_argument(cells[i]);
            } catch (const std::exception&) {
                throw FormatError("vectors line " + std::to_string(ln) + ": bad number '" + cells[i] + "'");
            }
        }
        if (!entry.vectors.empty() && entry.vectors.front().size() != v.size())
            throw FormatError("vectors line " + std::to_string(ln) + ": dimension differs within task");
        entry.vectors.push_back(std::move(v));
    }
    return out;
}

void write_vectors(std::ostream& out, const std::map<std::string, VectorFileEntry>& sets) {
    out << "task_id,kind,values\n";
    const auto old = out.precision(17);
    for (const auto& [task, entry] : sets)
        for (const auto& v : entry.vectors) {
            out << task << ',' << entry.kind;
            for (double x : v) out << ',' << x;
            out << '\n';
        }
    out.precision(old);
}

std::map<std::string, ClusterProfile> read_clusters(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "task_id,solution_id,cluster_label")
        throw FormatError("clusters file needs header task_id,solution_id,cluster_label");
    std::map<std::string, std::vector<std::string>> labels;
    int ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != 3) throw FormatError("clusters line " + std::to_string(ln) + ": need three columns");
        labels[cells[0]].push_back(cells[2]);
    }
    std::map<std::string, ClusterProfile> out;
    for (const auto& [task, ls] : labels) out[task] = profile_from_labels(ls);
    return out;
}

}  // namespace mars::diversity
