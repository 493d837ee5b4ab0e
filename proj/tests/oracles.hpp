#pragma once

// Brute-force reference implementations. They work on plain vectors and
// recount everything from scratch so they share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace oracle {

/// counts[f][r] = C(f, r) over a dense feature x rule matrix.
using matrix = std::vector<std::vector<long long>>;

inline long long row_sum(const matrix& m, std::size_t f) {
    long long s = 0;
    for (auto v : m[f]) {
        s += v;
    }
    return s;
}

inline long long col_sum(const matrix& m, std::size_t r) {
    long long s = 0;
    for (const auto& row : m) {
        s += row[r];
    }
    return s;
}

inline long long total(const matrix& m) {
    long long s = 0;
    for (std::size_t f = 0; f < m.size(); ++f) {
        s += row_sum(m, f);
    }
    return s;
}

/// Distinct rules observed anywhere.
inline std::size_t universe(const matrix& m) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < (m.empty() ? 0 : m[0].size()); ++r) {
        if (col_sum(m, r) > 0) {
            ++n;
        }
    }
    return n;
}

inline double pmi(const matrix& m, std::size_t f, std::size_t r, double alpha) {
    double R = static_cast<double>(universe(m));
    double cond = (static_cast<double>(m[f][r]) + alpha) / (static_cast<double>(row_sum(m, f)) + alpha * R);
    double marg = (static_cast<double>(col_sum(m, r)) + alpha) / (static_cast<double>(total(m)) + alpha * R);
    return std::log(cond / marg);
}

/// Greedy selection recomputing every rule's usage from the picks made so far.
/// Returns rule indices per feature (features in index order).
inline std::vector<std::vector<std::size_t>> build(const matrix& m, double alpha, double lambda_div, int k,
                                                   const std::vector<std::string>& rule_names) {
    std::vector<std::vector<std::size_t>> picks(m.size());
    for (std::size_t f = 0; f < m.size(); ++f) {
        std::set<std::size_t> remaining;
        for (std::size_t r = 0; r < m[f].size(); ++r) {
            if (m[f][r] > 0) {
                remaining.insert(r);
            }
        }
        while (!remaining.empty() && static_cast<int>(picks[f].size()) < k) {
            auto usage = [&](std::size_t r) {
                long long u = 0;
                for (const auto& list : picks) {
                    u += std::count(list.begin(), list.end(), r);
                }
                return u;
            };
            std::vector<std::tuple<double, double, std::string, std::size_t>> scored;
            for (auto r : remaining) {
                double p = pmi(m, f, r, alpha);
                double adj = p - std::log(1.0 + lambda_div * static_cast<double>(usage(r)));
                scored.emplace_back(adj, p, rule_names[r], r);
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (std::get<0>(a) != std::get<0>(b)) {
                    return std::get<0>(a) > std::get<0>(b);
                }
                if (std::get<1>(a) != std::get<1>(b)) {
                    return std::get<1>(a) > std::get<1>(b);
                }
                return std::get<2>(a) < std::get<2>(b);
            });
            auto chosen = std::get<3>(scored.front());
            picks[f].push_back(chosen);
            remaining.erase(chosen);
        }
    }
    return picks;
}

/// One program for the metric oracles: its pairs as a flat list (may repeat).
struct program {
    std::string task;
    std::string domain;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::vector<std::string> features;
};

/// Exact rational result so that comparisons need no tolerance.
struct ratio {
    long long num{};
    long long den{};

    bool defined() const { return den > 0; }
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

inline bool has_pair(const program& p, const std::pair<std::string, std::string>& v) {
    return std::find(p.pairs.begin(), p.pairs.end(), v) != p.pairs.end();
}

/// Recurrence over the programs selected by `in_group`, restricted to pairs
/// accepted by `keep`, enumerating every (pair, program) combination.
template <class InGroup, class Keep>
ratio recurrence(const std::vector<program>& all, InGroup in_group, Keep keep) {
    std::vector<std::pair<std::string, std::string>> distinct;
    for (const auto& p : all) {
        if (!in_group(p)) {
            continue;
        }
        for (const auto& v : p.pairs) {
            if (keep(v) && std::find(distinct.begin(), distinct.end(), v) == distinct.end()) {
                distinct.push_back(v);
            }
        }
    }
    ratio out{0, static_cast<long long>(distinct.size())};
    for (const auto& v : distinct) {
        int freq = 0;
        for (const auto& p : all) {
            if (in_group(p) && has_pair(p, v)) {
                ++freq;
            }
        }
        if (freq > 1) {
            ++out.num;
        }
    }
    return out;
}

inline ratio recurrence_all(const std::vector<program>& all) {
    return recurrence(all, [](const program&) { return true; }, [](const auto&) { return true; });
}

inline std::map<std::string, ratio> fvr(const std::vector<program>& all) {
    std::set<std::string> features;
    for (const auto& p : all) {
        features.insert(p.features.begin(), p.features.end());
        for (const auto& v : p.pairs) {
            features.insert(v.first);
        }
    }
    std::map<std::string, ratio> out;
    for (const auto& f : features) {
        auto contains_f = [&](const program& p) {
            bool labeled = std::find(p.features.begin(), p.features.end(), f) != p.features.end();
            bool paired = std::any_of(p.pairs.begin(), p.pairs.end(), [&](const auto& v) { return v.first == f; });
            return labeled || paired;
        };
        out[f] = recurrence(all, contains_f, [&](const auto& v) { return v.first == f; });
    }
    return out;
}

inline std::map<std::string, ratio> rvp(const std::vector<program>& all) {
    std::map<std::string, ratio> out;
    for (const auto& p : all) {
        out[p.task] = recurrence(all, [&](const program& q) { return q.task == p.task; },
                                 [](const auto&) { return true; });
    }
    return out;
}

inline std::map<std::string, ratio> dvr(const std::vector<program>& all) {
    std::map<std::string, ratio> out;
    for (const auto& p : all) {
        out[p.domain] = recurrence(all, [&](const program& q) { return q.domain == p.domain; },
                                   [](const auto&) { return true; });
    }
    return out;
}

inline std::map<std::string, ratio> cdt(const std::vector<program>& all) {
    std::map<std::string, ratio> out;
    for (const auto& p : all) {
        const auto& d = p.domain;
        std::vector<std::pair<std::string, std::string>> in_d;
        for (const auto& q : all) {
            if (q.domain != d) {
                continue;
            }
            for (const auto& v : q.pairs) {
                if (std::find(in_d.begin(), in_d.end(), v) == in_d.end()) {
                    in_d.push_back(v);
                }
            }
        }
        ratio r{0, static_cast<long long>(in_d.size())};
        for (const auto& v : in_d) {
            bool elsewhere = std::any_of(all.begin(), all.end(),
                                         [&](const program& q) { return q.domain != d && has_pair(q, v); });
            if (elsewhere) {
                ++r.num;
            }
        }
        out[d] = r;
    }
    return out;
}

/// Mean over defined ratios; nullopt-like flag via `defined`.
inline std::pair<bool, double> mean(const std::map<std::string, ratio>& m) {
    double sum = 0.0;
    int n = 0;
    for (const auto& [k, r] : m) {
        if (r.defined()) {
            sum += r.value();
            ++n;
        }
    }
    return {n > 0, n > 0 ? sum / n : 0.0};
}

/// Random corpus of at most `max_programs` programs over small pools so that
/// pairs collide often.
inline std::vector<program> random_corpus(std::mt19937_64& rng, int max_programs) {
    auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
    int n = 1 + pick(max_programs);
    int n_tasks = 1 + pick(4);
    int n_domains = 1 + pick(3);
    std::vector<program> out;
    for (int i = 0; i < n; ++i) {
        program p;
        int t = pick(n_tasks);
        p.task = "t" + std::to_string(t);
        p.domain = "d" + std::to_string(t % n_domains);
        int n_pairs = pick(5);
        for (int j = 0; j < n_pairs; ++j) {
            p.pairs.emplace_back("f" + std::to_string(pick(3)), "r" + std::to_string(pick(4)));
        }
        for (const auto& v : p.pairs) {
            p.features.push_back(v.first);
        }
        if (pick(3) == 0) {
            p.features.push_back("f" + std::to_string(3 + pick(2)));
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace oracle
