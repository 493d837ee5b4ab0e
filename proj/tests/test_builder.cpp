#include "fstab/builder.hpp"
#include "fstab/jsonl.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace fstab;

namespace {

std::string fname(std::size_t i) { return "f" + std::to_string(i); }
std::string rname(std::size_t i) { return "r" + std::to_string(i); }

cooccurrence_counts from_matrix(const oracle::matrix& m) {
    cooccurrence_counts c;
    for (std::size_t f = 0; f < m.size(); ++f) {
        for (std::size_t r = 0; r < m[f].size(); ++r) {
            if (m[f][r] > 0) {
                c.add(fname(f), rname(r), m[f][r]);
            }
        }
    }
    return c;
}

oracle::matrix random_matrix(std::mt19937_64& rng, std::size_t max_f = 8, std::size_t max_r = 8) {
    std::size_t nf = 1 + rng() % max_f;
    std::size_t nr = 1 + rng() % max_r;
    oracle::matrix m(nf, std::vector<long long>(nr, 0));
    for (auto& row : m) {
        for (auto& v : row) {
            v = (rng() % 3 == 0) ? 0 : static_cast<long long>(rng() % 6);
        }
    }
    m[0][0] = std::max<long long>(m[0][0], 1);
    return m;
}

}  // namespace

TEST_CASE("count_cooccurrences tallies and marginals") {
    CHECK(count_cooccurrences({}).grand_total() == 0);

    std::vector<labeled_vuln> v{{"f1", "r1"}, {"f1", "r1"}, {"f1", "r2"}};
    auto c = count_cooccurrences(v);
    CHECK(c.pair("f1", "r1") == 2);
    CHECK(c.pair("f1", "r2") == 1);
    CHECK(c.feature_total("f1") == 3);
    CHECK(c.grand_total() == 3);
    CHECK(c.rule_universe_size() == 2);
    CHECK(c.candidates("f1") == std::vector<std::string>{"r1", "r2"});
    CHECK(c.candidates("nope").empty());
}

TEST_CASE("marginals equal a full recount on random pairs") {
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 20; ++iter) {
        std::vector<labeled_vuln> pairs;
        for (int i = 0; i < 100; ++i) {
            pairs.push_back({fname(rng() % 5), rname(rng() % 4)});
        }
        auto c = count_cooccurrences(pairs);
        long long n = 0;
        for (std::size_t f = 0; f < 5; ++f) {
            long long row = 0;
            for (std::size_t r = 0; r < 4; ++r) {
                auto expect = std::count(pairs.begin(), pairs.end(), labeled_vuln{fname(f), rname(r)});
                CHECK(c.pair(fname(f), rname(r)) == expect);
                row += expect;
            }
            CHECK(c.feature_total(fname(f)) == row);
            n += row;
        }
        for (std::size_t r = 0; r < 4; ++r) {
            auto expect = std::count_if(pairs.begin(), pairs.end(), [&](const auto& p) { return p.rule == rname(r); });
            CHECK(c.rule_total(rname(r)) == expect);
        }
        CHECK(c.grand_total() == n);

        // Associative merge of two halves gives the same counts.
        std::span<const labeled_vuln> all(pairs);
        auto merged = count_cooccurrences(all.first(37));
        merged += count_cooccurrences(all.subspan(37));
        CHECK(merged.pairs() == c.pairs());
        CHECK(merged.grand_total() == c.grand_total());
    }
}

TEST_CASE("pmi worked example and preconditions") {
    // |R| = 2, C(f,r1) = 4, C(f) = 4, C(r1) = 4, N = 8.
    cooccurrence_counts c;
    c.add("f", "r1", 4);
    c.add("g", "r2", 4);
    CHECK(pmi("f", "r1", c, 0.5) == doctest::Approx(std::log(0.9 / 0.5)).epsilon(1e-14));
    CHECK(std::abs(pmi("f", "r1", c, 0.5) - 0.5877866649) < 1e-9);
    CHECK_THROWS_AS(pmi("f", "r2", c, 0.5), std::domain_error);
    CHECK_THROWS_AS(pmi("f", "r1", c, 0.0), std::domain_error);
}

TEST_CASE("pmi is zero when the conditional equals the marginal") {
    cooccurrence_counts c;
    c.add("f", "r", 3);
    c.add("f", "s", 3);
    c.add("g", "r", 5);
    c.add("g", "s", 5);
    CHECK(std::abs(pmi("f", "r", c, 0.5)) < 1e-12);
    CHECK(std::abs(pmi("g", "s", c, 0.5)) < 1e-12);
}

TEST_CASE("pmi grows as the rule gets rarer elsewhere") {
    auto at = [](int other) {
        cooccurrence_counts c;
        c.add("f", "r", 2);
        c.add("f", "s", 2);
        c.add("g", "r", other);
        c.add("g", "s", 10 - other);
        return pmi("f", "r", c, 0.5);
    };
    CHECK(at(2) > at(6));
}

TEST_CASE("pmi matches the dense oracle on random matrices") {
    std::mt19937_64 rng(99);
    for (int iter = 0; iter < 200; ++iter) {
        auto m = random_matrix(rng);
        auto c = from_matrix(m);
        for (std::size_t f = 0; f < m.size(); ++f) {
            for (std::size_t r = 0; r < m[f].size(); ++r) {
                if (m[f][r] > 0) {
                    CHECK(std::abs(pmi(fname(f), rname(r), c, 0.5) - oracle::pmi(m, f, r, 0.5)) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("adjusted score and discount factor") {
    CHECK(adjusted_score(1.25, 0, 0.8) == 1.25);
    CHECK(std::abs(discount_factor(1, 0.8) - 1.0 / 1.8) < 1e-12);
    CHECK(discount_factor(5, 0.8) == 0.2);
    CHECK(adjusted_score(2.0, 1, 0.8) == doctest::Approx(2.0 - std::log(1.8)));
    CHECK(adjusted_score(2.0, 5, 0.8) == doctest::Approx(2.0 - std::log(5.0)));
    CHECK(std::abs(std::exp(adjusted_score(0.0, 3, 0.8)) - discount_factor(3, 0.8)) < 1e-12);
    CHECK_THROWS_AS(adjusted_score(1.0, 1, -0.1), std::domain_error);
}

TEST_CASE("displacement threshold") {
    CHECK(displacement_threshold(0.0, 0.8) == 0.0);
    CHECK(displacement_threshold(std::log(2.0), 0.8) == doctest::Approx(1.25).epsilon(1e-14));
    CHECK_THROWS_AS(displacement_threshold(1.0, 0.0), std::domain_error);
    std::vector<double> deltas{0.1, 0.5, 1.0};
    std::vector<double> lambdas{0.2, 0.8, 1.6};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j + 1 < 3; ++j) {
            CHECK(displacement_threshold(deltas[j], lambdas[i]) < displacement_threshold(deltas[j + 1], lambdas[i]));
            CHECK(displacement_threshold(deltas[i], lambdas[j]) > displacement_threshold(deltas[i], lambdas[j + 1]));
        }
    }
}

TEST_CASE("single feature reduces to a pmi sort") {
    cooccurrence_counts c;
    c.add("f", "a", 1);
    c.add("f", "b", 5);
    c.add("f", "c", 2);
    c.add("g", "a", 6);
    c.add("g", "c", 1);
    c.add("g", "b", 1);
    auto t = build_fstab(c, {0.5, 0.8, 25}, "m");
    const auto& list = t.entries.at("f");
    REQUIRE(list.size() == 3);
    CHECK(list[0].pmi >= list[1].pmi);
    CHECK(list[1].pmi >= list[2].pmi);
    for (std::size_t i = 0; i < list.size(); ++i) {
        CHECK(list[i].rank == static_cast<int>(i) + 1);
    }
}

TEST_CASE("shared generic rule flips the second feature's pick") {
    // Both features prefer "generic" by a small raw margin since the specific
    // rules are also common under "z"; after f1 takes it, the penalty ln(1.8)
    // exceeds f2's margin.
    cooccurrence_counts c;
    c.add("f1", "generic", 3);
    c.add("f1", "spec1", 3);
    c.add("f2", "generic", 3);
    c.add("f2", "spec2", 3);
    c.add("z", "spec1", 5);
    c.add("z", "spec2", 5);
    double margin = pmi("f2", "generic", c, 0.5) - pmi("f2", "spec2", c, 0.5);
    REQUIRE(margin > 0.0);
    REQUIRE(margin < std::log(1.8));
    auto t = build_fstab(c, {0.5, 0.8, 25}, "m");
    CHECK(t.entries.at("f1")[0].rule_id == "generic");
    CHECK(t.entries.at("f2")[0].rule_id == "spec2");
    auto flat = build_fstab(c, {0.5, 0.0, 25}, "m");
    CHECK(flat.entries.at("f2")[0].rule_id == "generic");

    oracle::matrix m{{3, 3, 0}, {3, 0, 3}, {0, 5, 5}};
    auto picks = oracle::build(m, 0.5, 0.8, 25, {"generic", "spec1", "spec2"});
    CHECK(picks[0][0] == 0);
    CHECK(picks[1][0] == 2);
}

TEST_CASE("build matches the oracle on random counts, with lambda = 0 as independent sorts") {
    std::mt19937_64 rng(5);
    for (int iter = 0; iter < 150; ++iter) {
        auto m = random_matrix(rng);
        auto c = from_matrix(m);
        std::vector<std::string> names;
        for (std::size_t r = 0; r < m[0].size(); ++r) {
            names.push_back(rname(r));
        }
        for (double lambda_div : {0.0, 0.8, 2.0}) {
            int k = 1 + static_cast<int>(rng() % 5);
            auto t = build_fstab(c, {0.5, lambda_div, k}, "m");
            // Feature ids f0..f7 sort the same as their indices.
            auto picks = oracle::build(m, 0.5, lambda_div, k, names);
            for (std::size_t f = 0; f < m.size(); ++f) {
                const auto* list = t.find(fname(f));
                if (picks[f].empty()) {
                    CHECK(list == nullptr);
                    continue;
                }
                REQUIRE(list != nullptr);
                REQUIRE(list->size() == picks[f].size());
                std::set<std::string> seen;
                for (std::size_t i = 0; i < picks[f].size(); ++i) {
                    CHECK((*list)[i].rule_id == rname(picks[f][i]));
                    CHECK(c.pair(fname(f), (*list)[i].rule_id) > 0);
                    CHECK(seen.insert((*list)[i].rule_id).second);
                }
                CHECK(static_cast<int>(list->size()) <= k);
            }
        }
    }
}

TEST_CASE("realized displacement: generic loses once its usage passes the threshold") {
    // Target feature "z" sees generic with a PMI lead of delta over "spec".
    // Preceding features "a0".."a{u-1}" each take generic first.
    auto build_with = [](int prior_uses) {
        cooccurrence_counts c;
        for (int i = 0; i < prior_uses; ++i) {
            c.add("a" + std::to_string(i), "generic", 1);
        }
        c.add("z", "generic", 2);
        c.add("z", "spec", 1);
        return std::pair{build_fstab(c, {0.5, 0.8, 25}, "m"), c};
    };
    for (int u = 0; u <= 4; ++u) {
        auto [t, c] = build_with(u);
        double delta = pmi("z", "generic", c, 0.5) - pmi("z", "spec", c, 0.5);
        bool displaced = t.entries.at("z")[0].rule_id == "spec";
        CHECK(displaced == (static_cast<double>(u) > displacement_threshold(delta, 0.8)));
    }
}

TEST_CASE("coverage_k") {
    cooccurrence_counts c;
    c.add("f", "a", 4);
    c.add("f", "b", 3);
    c.add("f", "c", 2);
    c.add("f", "d", 1);
    c.add("g", "a", 1);
    auto full = build_fstab(c, {0.5, 0.8, 25}, "m");
    CHECK(coverage_k(c, full, "f") == 1.0);
    CHECK(coverage_k(c, full, "g") == 1.0);

    auto top2 = build_fstab(c, {0.5, 0.8, 2}, "m");
    double all = 0.0;
    double kept = 0.0;
    for (auto r : {"a", "b", "c", "d"}) {
        all += smoothed_conditional("f", r, c, 0.5);
    }
    for (const auto& e : top2.entries.at("f")) {
        kept += smoothed_conditional("f", e.rule_id, c, 0.5);
    }
    CHECK(coverage_k(c, top2, "f") == doctest::Approx(kept / all).epsilon(1e-14));

    fstab_table empty = top2;
    empty.entries["f"].clear();
    CHECK(coverage_k(c, empty, "f") == 0.0);
    CHECK_THROWS_AS(coverage_k(c, top2, "absent"), std::domain_error);
}

TEST_CASE("coverage is non-decreasing in k") {
    std::mt19937_64 rng(17);
    for (int iter = 0; iter < 50; ++iter) {
        auto c = from_matrix(random_matrix(rng));
        for (const auto& [f, total] : c.feature_totals()) {
            double prev = 0.0;
            for (int k = 1; k <= 9; ++k) {
                double cov = coverage_k(c, build_fstab(c, {0.5, 0.8, k}, "m"), f);
                CHECK(cov >= prev - 1e-15);
                prev = cov;
            }
            CHECK(prev == 1.0);
        }
    }
}

TEST_CASE("concentration and gini") {
    std::vector<std::int64_t> v{3, 1};
    CHECK(gini(v) == doctest::Approx(0.25));
    std::vector<std::int64_t> even{2, 2, 2};
    CHECK(gini(even) == 0.0);
    CHECK_THROWS_AS(gini(std::span<const std::int64_t>{}), std::domain_error);

    fstab_table t;
    t.entries["a"] = {{"r1", 1, 1, 1}};
    t.entries["b"] = {{"r2", 1, 1, 1}};
    auto distinct = concentration_stats(t);
    CHECK(distinct.max_use_1 == 1);
    CHECK(distinct.gini_1 == 0.0);

    t.entries["b"] = {{"r1", 1, 1, 1}};
    t.entries["c"] = {{"r1", 1, 1, 1}, {"r9", 1, 1, 2}};
    CHECK(concentration_stats(t).max_use_1 == 3);

    t.entries["d"] = {{"r2", 1, 1, 1}};
    auto mixed = concentration_stats(t);
    CHECK(mixed.gini_1 == doctest::Approx(0.25));

    CHECK_THROWS_AS(concentration_stats(fstab_table{}), std::domain_error);
}

TEST_CASE("serialization is byte-identical regardless of input order") {
    std::mt19937_64 rng(3);
    std::vector<labeled_vuln> pairs;
    for (int i = 0; i < 300; ++i) {
        pairs.push_back({fname(rng() % 6), rname(rng() % 9)});
    }
    auto a = build_fstab(count_cooccurrences(pairs), {}, "m");
    std::shuffle(pairs.begin(), pairs.end(), rng);
    auto b = build_fstab(count_cooccurrences(pairs), {}, "m");
    CHECK(to_json(a).dump(2) == to_json(b).dump(2));

    a.provenance.mode = "held_out";
    a.provenance.target_domain = "shop";
    a.provenance.seed = 42;
    a.provenance.construction_programs = {"p1", "p2"};
    auto path = std::filesystem::temp_directory_path() / "fstab_test_table.json";
    write_table(path, a);
    auto back = load_table(path);
    CHECK(back == a);
    std::filesystem::remove(path);
}

TEST_CASE("malformed tables are input errors") {
    CHECK_THROWS_AS(table_from_json(nlohmann::json::object()), input_error);
    CHECK_THROWS_AS(table_from_json(nlohmann::json::parse(R"({"header":{"model":1}})")), input_error);
}

TEST_CASE("training_pairs: per-program dedup, per-finding multiplicity, unknown handling") {
    std::vector<finding> findings{{"p1", "a.py", 3, "r1", "s"}, {"p1", "a.py", 4, "r1", "s"},
                                  {"p1", "a.py", 9, "r2", "s"}, {"p2", "a.py", 3, "r1", "s"}};
    std::vector<feature_label> labels{{"p1", "a.py", 3, "login", 3, false},
                                      {"p1", "a.py", 4, "login", 3, false},
                                      {"p1", "a.py", 9, "unknown", 0, false},
                                      {"p2", "a.py", 3, "login", 3, false}};
    auto per_program = training_pairs(findings, labels, count_mode::per_program, false);
    CHECK(per_program.size() == 2);
    CHECK(count_cooccurrences(per_program).pair("login", "r1") == 2);
    auto per_finding = training_pairs(findings, labels, count_mode::per_finding, false);
    CHECK(count_cooccurrences(per_finding).pair("login", "r1") == 3);
    auto with_unknown = training_pairs(findings, labels, count_mode::per_program, true);
    CHECK(count_cooccurrences(with_unknown).pair("unknown", "r2") == 1);

    labels.pop_back();
    CHECK_THROWS_AS(training_pairs(findings, labels, count_mode::per_program, false), input_error);
}
