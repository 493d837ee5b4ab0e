#include "fstab/attack.hpp"
#include "fstab/metrics.hpp"

#include <doctest.h>

#include <random>

using namespace fstab;

namespace {

fstab_table small_table() {
    fstab_table t;
    t.params.top_k = 3;
    t.entries["login"] = {{"r1", 1, 1, 1}, {"r2", 1, 1, 2}, {"r3", 1, 1, 3}};
    t.entries["upload"] = {{"r4", 1, 1, 1}, {"r1", 1, 1, 2}};
    return t;
}

manifest grid(int domains, int tasks, int rephrasings) {
    std::vector<program_record> rs;
    for (int d = 0; d < domains; ++d) {
        for (int t = 0; t < tasks; ++t) {
            for (int k = 0; k < rephrasings; ++k) {
                auto task = "d" + std::to_string(d) + "t" + std::to_string(t);
                rs.push_back({task + "k" + std::to_string(k), task, k, "dom" + std::to_string(d), "m", "s"});
            }
        }
    }
    return manifest(rs);
}

std::set<std::string> domain_of(const manifest& m, const std::set<std::string>& ids) {
    std::set<std::string> out;
    for (const auto& id : ids) {
        out.insert(m.find(id)->domain);
    }
    return out;
}

}  // namespace

TEST_CASE("predict takes prefixes and unions them") {
    auto t = small_table();
    CHECK(predict(t, {"login"}, 0).empty());
    CHECK(predict(t, {"login"}, 2) == rule_set{"r1", "r2"});
    CHECK(predict(t, {"login", "upload"}, 1) == rule_set{"r1", "r4"});
    CHECK(predict(t, {"login", "upload"}, 10) == rule_set{"r1", "r2", "r3", "r4"});
    CHECK(predict(t, {"absent"}, 3).empty());
    CHECK_THROWS_AS(predict(t, {"login"}, -1), std::domain_error);
}

TEST_CASE("predict grows with query_k and with observed features") {
    auto t = small_table();
    std::vector<std::set<std::string>> feature_sets{{}, {"login"}, {"upload"}, {"login", "upload"}, {"login", "x"}};
    for (const auto& fs : feature_sets) {
        rule_set prev;
        for (int k = 0; k <= 4; ++k) {
            auto cur = predict(t, fs, k);
            CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
            // Oracle: explicit union of prefixes.
            rule_set expect;
            for (const auto& f : fs) {
                if (auto* list = t.find(f)) {
                    for (int i = 0; i < k && i < static_cast<int>(list->size()); ++i) {
                        expect.insert((*list)[static_cast<std::size_t>(i)].rule_id);
                    }
                }
            }
            CHECK(cur == expect);
            prev = cur;
        }
    }
    auto one = predict(t, {"login"}, 3);
    auto both = predict(t, {"login", "upload"}, 3);
    CHECK(std::includes(both.begin(), both.end(), one.begin(), one.end()));
}

TEST_CASE("score_program") {
    auto s = score_program({"a", "b", "x"}, {"a", "b", "c", "d"});
    CHECK(s.success);
    CHECK(*s.coverage == 0.5);
    auto miss = score_program({"x"}, {"a"});
    CHECK_FALSE(miss.success);
    CHECK(*miss.coverage == 0.0);
    auto empty = score_program({"a"}, {});
    CHECK_FALSE(empty.success);
    CHECK_FALSE(empty.coverage.has_value());

    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
        rule_set p;
        rule_set a;
        for (int r = 0; r < 6; ++r) {
            if (rng() % 2) {
                p.insert("r" + std::to_string(r));
            }
            if (rng() % 2) {
                a.insert("r" + std::to_string(r));
            }
        }
        auto sc = score_program(p, a);
        if (a.empty()) {
            continue;
        }
        CHECK(sc.success == (*sc.coverage > 0.0));
        CHECK(*sc.coverage <= 1.0);
    }
}

TEST_CASE("evaluate averages over scored programs") {
    auto t = small_table();
    std::vector<attack_target> targets{{"p3", {"login"}, {"r1", "r9"}},
                                       {"p1", {"upload"}, {"r4"}},
                                       {"p2", {"login"}, {"r8"}},
                                       {"p4", {"login"}, {}}};
    auto e = evaluate(t, targets, 1);
    CHECK(e.n_scored == 3);
    CHECK(e.n_excluded == 1);
    CHECK(e.asr == doctest::Approx(2.0 / 3.0));
    CHECK(e.acr == doctest::Approx(0.5));
    REQUIRE(e.results.size() == 4);
    CHECK(e.results[0].program_id == "p1");

    auto failing = evaluate(t, targets, 1, empty_policy::as_failure);
    CHECK(failing.n_scored == 4);
    CHECK(failing.asr == 0.5);
    CHECK(failing.acr == doctest::Approx(1.5 / 4.0));

    std::vector<attack_target> nothing{{"p", {"login"}, {}}};
    CHECK_THROWS_AS(evaluate(t, nothing, 1), undefined_metric);
    CHECK_THROWS_AS(evaluate(t, {}, 1), undefined_metric);
}

TEST_CASE("ASR is non-decreasing in query_k") {
    auto t = small_table();
    std::vector<attack_target> targets{{"a", {"login"}, {"r3"}}, {"b", {"upload"}, {"r1"}}, {"c", {"login"}, {"r2"}}};
    double prev = -1.0;
    for (int k = 0; k <= 3; ++k) {
        auto e = evaluate(t, targets, k);
        CHECK(e.asr >= prev);
        prev = e.asr;
    }
    CHECK(prev == 1.0);
}

TEST_CASE("held-out split keeps tasks whole and is deterministic") {
    auto m = grid(2, 10, 3);
    auto a = make_split(m, split_mode::held_out, std::nullopt, 7, 0.5);
    auto b = make_split(m, split_mode::held_out, std::nullopt, 7, 0.5);
    CHECK(a.construction_programs == b.construction_programs);
    CHECK(a.construction_programs.size() == 30);
    CHECK(a.test_programs.size() == 30);
    for (const auto& id : a.construction_programs) {
        CHECK_FALSE(a.test_programs.contains(id));
        auto task = m.find(id)->task_id;
        for (const auto& r : m.records()) {
            if (r.task_id == task) {
                CHECK(a.construction_programs.contains(r.program_id));
            }
        }
    }
    // Per domain: five construction tasks each.
    for (const auto& dom : {"dom0", "dom1"}) {
        int n = 0;
        for (const auto& id : a.construction_programs) {
            n += m.find(id)->domain == dom;
        }
        CHECK(n == 15);
    }
    auto c = make_split(m, split_mode::held_out, std::nullopt, 8, 0.5);
    CHECK(c.construction_programs != a.construction_programs);

    auto targeted = make_split(m, split_mode::held_out, std::string("dom1"), 7, 0.5);
    CHECK(targeted.construction_programs == a.construction_programs);
    CHECK(domain_of(m, targeted.test_programs) == std::set<std::string>{"dom1"});
}

TEST_CASE("cross-domain split excludes the target from construction") {
    auto m = grid(3, 4, 2);
    auto s = make_split(m, split_mode::cross_domain, std::string("dom2"), 1, 0.5);
    CHECK_FALSE(domain_of(m, s.construction_programs).contains("dom2"));
    CHECK(s.construction_programs.size() == 16);
    CHECK(domain_of(m, s.test_programs) == std::set<std::string>{"dom2"});
    CHECK(s.test_programs.size() == 4);

    CHECK_THROWS_AS(make_split(m, split_mode::cross_domain, std::nullopt, 1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(make_split(m, split_mode::cross_domain, std::string("nowhere"), 1, 0.5), input_error);
    CHECK_THROWS_AS(make_split(m, split_mode::held_out, std::nullopt, 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_split(manifest{}, split_mode::held_out, std::nullopt, 1, 0.5), input_error);
}

TEST_CASE("split mode names") {
    CHECK(parse_split_mode("held-out") == split_mode::held_out);
    CHECK(parse_split_mode("cross_domain") == split_mode::cross_domain);
    CHECK_FALSE(parse_split_mode("random").has_value());
    CHECK(parse_split_mode(to_string(split_mode::cross_domain)) == split_mode::cross_domain);
}

TEST_CASE("synth with full planted recurrence saturates the metrics") {
    synth_params p;
    p.seed = 9;
    auto c = make_synth_corpus(p, {});
    CHECK(c.programs.size() == 90);
    auto ps = collect_programs(manifest(c.programs), c.findings, c.labels, p.model, p.scanner, false);
    CHECK(*fvr(ps).model == 1.0);
    CHECK(*rvp(ps).model == 1.0);
    CHECK(*dvr(ps).model == 1.0);
}

TEST_CASE("synth noise with a large pool never recurs") {
    synth_params p;
    p.planted_recurrence_rate = 0.0;
    p.noise_rate = 1.0;
    p.rule_pool = 1000;
    auto c = make_synth_corpus(p, {});
    auto ps = collect_programs(manifest(c.programs), c.findings, c.labels, p.model, p.scanner, false);
    CHECK(*fvr(ps).model == 0.0);
    CHECK(*dvr(ps).model == 0.0);
    CHECK(*rvp(ps).model == 0.0);
}

TEST_CASE("synth is deterministic in its parameters") {
    synth_params p;
    p.planted_recurrence_rate = 0.6;
    p.noise_rate = 0.5;
    auto a = make_synth_corpus(p, "root");
    auto b = make_synth_corpus(p, "root");
    CHECK(a.findings == b.findings);
    CHECK(a.labels == b.labels);
    CHECK(a.sources == b.sources);
    p.seed = 2;
    CHECK(make_synth_corpus(p, "root").findings != a.findings);
    p.rephrasings = 0;
    CHECK_THROWS_AS(make_synth_corpus(p, "root"), std::invalid_argument);
}

TEST_CASE("synth labels agree with the extractor") {
    synth_params p;
    p.findings_per_pair = 2;
    auto c = make_synth_corpus(p, {});
    std::map<std::string, int> seen;
    for (const auto& l : c.labels) {
        const auto& src = c.sources.at("src/" + l.program_id + "/" + l.file);
        auto ctx = extract_context(src, l.line, language::python);
        auto got = classify_line(ctx, c.tax.actions, weights{});
        CHECK(got.action == l.action);
        ++seen[l.action];
    }
    CHECK(seen.size() == 12);
}

TEST_CASE("attack result json") {
    attack_result r{"p", {"a"}, {"a", "b"}, true, 0.5};
    auto j = to_json(r);
    CHECK(j["success"] == 1);
    CHECK(j["coverage"] == 0.5);
    r.coverage.reset();
    CHECK(to_json(r)["coverage"].is_null());
}
