#include "fstab/cli.hpp"

#include "fstab/attack.hpp"
#include "fstab/builder.hpp"
#include "fstab/corpus.hpp"
#include "fstab/extractor.hpp"
#include "fstab/jsonl.hpp"
#include "fstab/metrics.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef FSTAB_DATA_DIR
#define FSTAB_DATA_DIR "data"
#endif

namespace fstab::cli {

namespace {

    using json = nlohmann::json;

    class usage_error : public std::runtime_error {
      public:
        using std::runtime_error::runtime_error;
    };

    // INI file named by FSTAB_CONFIG. Section names may contain dots
    // ("extractor.weights"), so lookups use '|' as the path separator.
    class config_file {
      public:
        static config_file from_env() {
            config_file cfg;
            const char* path = std::getenv("FSTAB_CONFIG");
            if (path == nullptr || *path == '\0') {
                return cfg;
            }
            try {
                boost::property_tree::ini_parser::read_ini(path, cfg.tree_);
            } catch (const boost::property_tree::ini_parser_error& e) {
                throw input_error(std::string("config: ") + e.what());
            }
            cfg.path_ = path;
            return cfg;
        }

        template <class T>
        std::optional<T> get(const std::string& section, const std::string& key) const {
            auto node = tree_.get_child_optional(boost::property_tree::ptree::path_type(section + "|" + key, '|'));
            if (!node) {
                return std::nullopt;
            }
            auto value = node->get_value_optional<T>();
            if (!value) {
                throw input_error("config " + path_ + ": bad value for " + section + "." + key + ": '" +
                                  node->data() + "'");
            }
            return std::optional<T>(*value);
        }

      private:
        boost::property_tree::ptree tree_;
        std::string path_;
    };

    // Flag > config file > built-in default.
    template <class T>
    void layer(const CLI::Option* opt, T& value, const config_file& cfg, const std::string& section,
               const std::string& key) {
        if (opt != nullptr && opt->count() > 0) {
            return;
        }
        if (auto v = cfg.get<T>(section, key)) {
            value = *v;
        }
    }

    const std::string& require_path(const std::string& value, const char* flag) {
        if (value.empty()) {
            throw usage_error(std::string("missing required ") + flag);
        }
        return value;
    }

    std::string resolve_one(const std::set<std::string>& seen, const std::string& wanted, const char* what) {
        if (!wanted.empty()) {
            return wanted;
        }
        if (seen.size() == 1) {
            return *seen.begin();
        }
        if (seen.empty()) {
            throw undefined_metric(std::string("no ") + what + " present in the inputs");
        }
        std::string list;
        for (const auto& s : seen) {
            list += (list.empty() ? "" : ", ") + s;
        }
        throw usage_error(std::string("inputs hold several ") + what + "s (" + list + "); pick one with --" + what);
    }

    std::string format_double(double v, const char* fmt = "%.4f") {
        char buf[64];
        std::snprintf(buf, sizeof buf, fmt, v);
        return buf;
    }

    void emit(const std::string& path, const std::string& text, std::ostream& out) {
        if (path.empty()) {
            out << text;
            return;
        }
        auto p = std::filesystem::path(path);
        if (p.has_parent_path()) {
            std::filesystem::create_directories(p.parent_path());
        }
        std::ofstream file(p, std::ios::binary);
        if (!file) {
            throw input_error("cannot write '" + path + "'");
        }
        file << text;
    }

    struct corpus_inputs {
        std::string manifest;
        std::string findings;
        std::string labels;
        std::string model;
        std::string scanner;
        bool include_unknown{};

        struct flags {
            CLI::Option* manifest{};
            CLI::Option* findings{};
            CLI::Option* labels{};
            CLI::Option* model{};
            CLI::Option* scanner{};
            CLI::Option* include_unknown{};
        } opts;

        void add(CLI::App* app, bool with_labels) {
            opts.manifest = app->add_option("--manifest", manifest, "Program manifest (JSONL)");
            opts.findings = app->add_option("--findings", findings, "Scanner findings (JSONL)");
            if (with_labels) {
                opts.labels = app->add_option("--labels", labels, "Feature labels (JSONL)");
            }
            opts.model = app->add_option("--model", model, "Model slice to use");
            opts.scanner = app->add_option("--scanner", scanner, "Scanner slice to use");
            opts.include_unknown = app->add_flag("--include-unknown", include_unknown,
                                                 "Keep findings labeled 'unknown'");
        }

        void apply(const config_file& cfg) {
            layer(opts.manifest, manifest, cfg, "paths", "manifest");
            layer(opts.findings, findings, cfg, "paths", "findings");
            if (opts.labels != nullptr) {
                layer(opts.labels, labels, cfg, "paths", "labels");
            }
            layer(opts.model, model, cfg, "filter", "model");
            layer(opts.scanner, scanner, cfg, "filter", "scanner");
            layer(opts.include_unknown, include_unknown, cfg, "builder", "include_unknown");
        }
    };

    struct loaded_corpus {
        manifest programs;
        std::vector<finding> findings;
        std::vector<feature_label> labels;
        std::filesystem::path manifest_dir;
    };

    loaded_corpus load(const corpus_inputs& in, bool with_labels) {
        loaded_corpus c;
        c.programs = load_manifest(require_path(in.manifest, "--manifest"));
        c.manifest_dir = std::filesystem::path(in.manifest).parent_path();
        c.findings = load_findings(require_path(in.findings, "--findings"), c.programs);
        sort_findings(c.findings);
        if (with_labels) {
            c.labels = load_labels(require_path(in.labels, "--labels"), c.programs);
            sort_labels(c.labels);
        }
        return c;
    }

    std::set<std::string> models_of(const manifest& m) {
        std::set<std::string> out;
        for (const auto& r : m.records()) {
            out.insert(r.model);
        }
        return out;
    }

    std::set<std::string> scanners_of(const std::vector<finding>& findings) {
        std::set<std::string> out;
        for (const auto& f : findings) {
            out.insert(f.scanner);
        }
        return out;
    }

    std::set<std::string> programs_of_model(const manifest& m, const std::string& model) {
        std::set<std::string> out;
        for (const auto& r : m.records()) {
            if (r.model == model) {
                out.insert(r.program_id);
            }
        }
        return out;
    }

    struct split_inputs {
        std::string mode;
        std::string target_domain;
        std::uint64_t seed{0};
        double fraction{0.5};

        struct flags {
            CLI::Option* mode{};
            CLI::Option* target_domain{};
            CLI::Option* seed{};
            CLI::Option* fraction{};
        } opts;

        void add(CLI::App* app) {
            opts.mode = app->add_option("--mode", mode, "Split mode: held_out or cross_domain");
            opts.target_domain = app->add_option("--target-domain", target_domain, "Domain to evaluate on");
            opts.seed = app->add_option("--seed", seed, "Split seed");
            opts.fraction = app->add_option("--fraction", fraction, "Construction fraction of tasks per domain");
        }

        void apply(const config_file& cfg) {
            layer(opts.mode, mode, cfg, "attack", "mode");
            layer(opts.target_domain, target_domain, cfg, "attack", "target_domain");
            layer(opts.seed, seed, cfg, "attack", "seed");
            layer(opts.fraction, fraction, cfg, "attack", "fraction");
        }

        std::optional<std::string> target() const {
            return target_domain.empty() ? std::nullopt : std::optional<std::string>(target_domain);
        }
    };

    split_mode parse_mode_or_throw(const std::string& s) {
        auto m = parse_split_mode(s);
        if (!m) {
            throw usage_error("unknown split mode '" + s + "' (expected held_out or cross_domain)");
        }
        return *m;
    }

    count_mode parse_count_or_throw(const std::string& s) {
        auto m = parse_count_mode(s);
        if (!m) {
            throw usage_error("unknown count mode '" + s + "' (expected per-program or per-finding)");
        }
        return *m;
    }

    // ---- extract ------------------------------------------------------------

    struct extract_cmd {
        corpus_inputs corpus;
        std::string taxonomy_path = FSTAB_DATA_DIR "/taxonomy.json";
        std::string out;
        weights w;
        std::map<std::string, CLI::Option*> weight_opts;
        CLI::Option* taxonomy_opt{};
        CLI::Option* out_opt{};

        void add(CLI::App* app) {
            corpus.add(app, false);
            taxonomy_opt = app->add_option("--taxonomy", taxonomy_path, "Taxonomy file");
            out_opt = app->add_option("--out", out, "Labels file to write");
            weight_opts["threshold"] = app->add_option("--threshold", w.assign_threshold, "Assignment threshold");
            weight_opts["w_fn"] = app->add_option("--w-fn", w.w_fn);
            weight_opts["w_route"] = app->add_option("--w-route", w.w_route);
            weight_opts["w_api"] = app->add_option("--w-api", w.w_api);
            weight_opts["w_id"] = app->add_option("--w-id", w.w_id);
            weight_opts["w_str"] = app->add_option("--w-str", w.w_str);
            weight_opts["w_neg"] = app->add_option("--w-neg", w.w_neg);
            weight_opts["cap_id"] = app->add_option("--cap-id", w.cap_id);
            weight_opts["cap_str"] = app->add_option("--cap-str", w.cap_str);
        }

        int run(const config_file& cfg, std::ostream& out_stream) {
            corpus.apply(cfg);
            layer(taxonomy_opt, taxonomy_path, cfg, "paths", "taxonomy");
            layer(out_opt, out, cfg, "paths", "labels");
            layer(weight_opts["threshold"], w.assign_threshold, cfg, "extractor", "threshold");
            for (auto [key, field] : std::initializer_list<std::pair<const char*, double weights::*>>{
                         {"w_fn", &weights::w_fn},
                         {"w_route", &weights::w_route},
                         {"w_api", &weights::w_api},
                         {"w_id", &weights::w_id},
                         {"w_str", &weights::w_str},
                         {"w_neg", &weights::w_neg},
                         {"cap_id", &weights::cap_id},
                         {"cap_str", &weights::cap_str}}) {
                layer(weight_opts[key], w.*field, cfg, "extractor.weights", key);
            }
            require_path(out, "--out");
            auto tax = load_taxonomy(taxonomy_path);
            auto c = load(corpus, false);

            std::vector<feature_label> labels;
            std::set<std::tuple<std::string, std::string, int>> done;
            std::string current_program;
            std::string current_file;
            std::optional<source_file> source;
            for (const auto& f : c.findings) {
                if (!done.emplace(f.program_id, f.file, f.line).second) {
                    continue;
                }
                if (f.program_id != current_program || f.file != current_file) {
                    current_program = f.program_id;
                    current_file = f.file;
                    source.reset();
                    auto root = c.programs.find(f.program_id)->source_root;
                    if (root.is_relative()) {
                        root = c.manifest_dir / root;
                    }
                    std::ifstream in(root / f.file, std::ios::binary);
                    if (in) {
                        std::ostringstream text;
                        text << in.rdbuf();
                        source.emplace(text.str(), language_for(f.file));
                    }
                }
                feature_label label{f.program_id, f.file, f.line, std::string(unknown_action), 0.0, false};
                if (source && f.line <= source->line_count()) {
                    auto ctx = source->context_at(f.line);
                    auto cls = classify_line(ctx, tax.actions, w);
                    label.action = cls.action;
                    label.confidence = cls.confidence;
                    label.window_fallback = ctx.window_fallback;
                }
                labels.push_back(std::move(label));
            }
            write_labels(out, labels);
            std::size_t unknown = std::ranges::count(labels, std::string(unknown_action), &feature_label::action);
            out_stream << json{{"labels", labels.size()}, {"unknown", unknown}, {"out", out}}.dump() << '\n';
            return exit_ok;
        }
    };

    // ---- build --------------------------------------------------------------

    struct hyper_inputs {
        build_params params;
        std::string count = "per-program";
        struct flags {
            CLI::Option* alpha{};
            CLI::Option* lambda_div{};
            CLI::Option* top_k{};
            CLI::Option* count{};
        } opts;

        void add(CLI::App* app) {
            opts.alpha = app->add_option("--alpha", params.alpha, "Laplace smoothing");
            opts.lambda_div = app->add_option("--lambda", params.lambda_div, "Diversity penalty");
            opts.top_k = app->add_option("--top-k", params.top_k, "Rules kept per feature");
            opts.count = app->add_option("--count-mode", count, "per-program or per-finding");
        }

        void apply(const config_file& cfg) {
            layer(opts.alpha, params.alpha, cfg, "builder", "alpha");
            layer(opts.lambda_div, params.lambda_div, cfg, "builder", "lambda");
            layer(opts.top_k, params.top_k, cfg, "builder", "top_k");
            layer(opts.count, count, cfg, "builder", "count_mode");
            if (!(params.alpha > 0.0)) {
                throw usage_error("--alpha must be positive");
            }
            if (!(params.lambda_div >= 0.0)) {
                throw usage_error("--lambda must be non-negative");
            }
            if (params.top_k < 1) {
                throw usage_error("--top-k must be >= 1");
            }
        }
    };

    struct training_slice {
        std::string model;
        std::string scanner;
        table_provenance provenance;
        cooccurrence_counts counts;
    };

    training_slice training_data(const loaded_corpus& c, const corpus_inputs& in, const split_inputs& split,
                                 count_mode mode) {
        training_slice s;
        s.model = resolve_one(models_of(c.programs), in.model, "model");
        s.scanner = resolve_one(scanners_of(c.findings), in.scanner, "scanner");
        auto in_model = programs_of_model(c.programs, s.model);
        if (in_model.empty()) {
            throw input_error("no programs for model '" + s.model + "'");
        }
        std::set<std::string> construction = in_model;
        if (!split.mode.empty()) {
            auto plan = make_split(c.programs, parse_mode_or_throw(split.mode), split.target(), split.seed,
                                   split.fraction);
            construction.clear();
            for (const auto& id : plan.construction_programs) {
                if (in_model.contains(id)) {
                    construction.insert(id);
                }
            }
            s.provenance.mode = std::string(to_string(plan.mode));
            s.provenance.target_domain = plan.target_domain;
            s.provenance.seed = plan.seed;
            s.provenance.fraction = plan.fraction;
        }
        s.provenance.construction_programs.assign(construction.begin(), construction.end());
        std::set<std::string> domains;
        for (const auto& id : construction) {
            domains.insert(c.programs.find(id)->domain);
        }
        s.provenance.construction_domains.assign(domains.begin(), domains.end());

        std::vector<finding> findings;
        for (const auto& f : c.findings) {
            if (f.scanner == s.scanner && construction.contains(f.program_id)) {
                findings.push_back(f);
            }
        }
        std::vector<feature_label> labels;
        for (const auto& l : c.labels) {
            if (construction.contains(l.program_id)) {
                labels.push_back(l);
            }
        }
        auto pairs = training_pairs(findings, labels, mode, in.include_unknown);
        s.counts = count_cooccurrences(pairs);
        return s;
    }

    json diagnostics(const cooccurrence_counts& counts, const fstab_table& table) {
        json per = json::object();
        double cov_sum = 0.0;
        double size_sum = 0.0;
        for (const auto& [f, list] : table.entries) {
            double cov = coverage_k(counts, table, f);
            per[f] = cov;
            cov_sum += cov;
            size_sum += static_cast<double>(list.size());
        }
        auto n = static_cast<double>(table.entries.size());
        auto conc = concentration_stats(table);
        return {{"features", table.entries.size()},
                {"rules", counts.rule_universe_size()},
                {"training_pairs", counts.grand_total()},
                {"mean_coverage", cov_sum / n},
                {"mean_list_size", size_sum / n},
                {"max_use_1", conc.max_use_1},
                {"gini_1", conc.gini_1},
                {"coverage", std::move(per)}};
    }

    struct build_cmd {
        corpus_inputs corpus;
        split_inputs split;
        hyper_inputs hyper;
        std::string taxonomy_path = FSTAB_DATA_DIR "/taxonomy.json";
        std::string out;
        bool pretty{};
        CLI::Option* taxonomy_opt{};
        CLI::Option* out_opt{};

        void add(CLI::App* app) {
            corpus.add(app, true);
            split.add(app);
            hyper.add(app);
            taxonomy_opt = app->add_option("--taxonomy", taxonomy_path, "Taxonomy the labels came from");
            out_opt = app->add_option("--out", out, "Table file to write");
            app->add_flag("--pretty", pretty, "Human-readable diagnostics");
        }

        int run(const config_file& cfg, std::ostream& os) {
            corpus.apply(cfg);
            split.apply(cfg);
            hyper.apply(cfg);
            layer(taxonomy_opt, taxonomy_path, cfg, "paths", "taxonomy");
            layer(out_opt, out, cfg, "paths", "table");
            require_path(out, "--out");
            auto mode = parse_count_or_throw(hyper.count);
            auto c = load(corpus, true);
            auto tax = load_taxonomy(taxonomy_path);
            auto slice = training_data(c, corpus, split, mode);
            if (slice.counts.grand_total() == 0) {
                throw undefined_metric("no labeled findings in the construction split");
            }
            auto table = build_fstab(slice.counts, hyper.params, slice.model);
            table.scanner = slice.scanner;
            table.mode = mode;
            table.taxonomy_version = tax.version;
            table.include_unknown = corpus.include_unknown;
            table.provenance = std::move(slice.provenance);
            write_table(out, table);

            auto diag = diagnostics(slice.counts, table);
            if (pretty) {
                os << "model " << table.model << ", scanner " << table.scanner << ", " << diag["features"]
                   << " features, " << diag["rules"] << " rules\n"
                   << "mean Cov_k   " << format_double(diag["mean_coverage"].get<double>(), "%.3f") << '\n'
                   << "avg |T[f]|   " << format_double(diag["mean_list_size"].get<double>(), "%.3f") << '\n'
                   << "MaxUse_1     " << diag["max_use_1"] << '\n'
                   << "Gini_1       " << format_double(diag["gini_1"].get<double>(), "%.3f") << '\n';
            } else {
                os << diag.dump(2) << '\n';
            }
            return exit_ok;
        }
    };

    // ---- metrics ------------------------------------------------------------

    struct metrics_cmd {
        corpus_inputs corpus;
        std::string taxonomy_path = FSTAB_DATA_DIR "/taxonomy.json";
        std::string out;
        bool pretty{};
        bool zero_fill{};
        CLI::Option* taxonomy_opt{};
        CLI::Option* out_opt{};

        void add(CLI::App* app) {
            corpus.add(app, true);
            taxonomy_opt = app->add_option("--taxonomy", taxonomy_path, "Taxonomy for fingerprint categories");
            out_opt = app->add_option("--out", out, "Report file (default: standard output)");
            app->add_flag("--pretty", pretty, "Percentage tables");
            app->add_flag("--zero-fill", zero_fill, "Show undefined per-group values as 0");
        }

        int run(const config_file& cfg, std::ostream& os, std::ostream& err) {
            corpus.apply(cfg);
            layer(taxonomy_opt, taxonomy_path, cfg, "paths", "taxonomy");
            auto c = load(corpus, true);
            auto tax = load_taxonomy(taxonomy_path);

            std::set<std::string> models = models_of(c.programs);
            std::set<std::string> scanners = scanners_of(c.findings);
            if (!corpus.model.empty()) {
                models = {corpus.model};
            }
            if (!corpus.scanner.empty()) {
                scanners = {corpus.scanner};
            }
            std::vector<recurrence_report> reports;
            for (const auto& m : models) {
                for (const auto& s : scanners) {
                    auto programs = collect_programs(c.programs, c.findings, c.labels, m, s, corpus.include_unknown);
                    reports.push_back(make_report(m, s, programs, &tax));
                }
            }

            std::vector<double> gaps;
            for (const auto& r : reports) {
                if (r.universality_gap) {
                    gaps.push_back(*r.universality_gap);
                }
            }
            json doc;
            doc["reports"] = json::array();
            for (const auto& r : reports) {
                doc["reports"].push_back(to_json(r, zero_fill));
            }
            if (gaps.empty()) {
                doc["universality_gap"] = nullptr;
            } else {
                double sum = 0.0;
                for (double g : gaps) {
                    sum += g;
                }
                doc["universality_gap"] = {{"mean", sum / static_cast<double>(gaps.size())},
                                           {"min", *std::ranges::min_element(gaps)},
                                           {"max", *std::ranges::max_element(gaps)}};
            }
            emit(out, pretty ? format_reports(reports, zero_fill) : doc.dump(2) + "\n", os);

            bool any = std::ranges::any_of(reports, [](const recurrence_report& r) { return r.any_defined(); });
            if (!any) {
                err << "undefined metric: no labeled vulnerabilities in any (model, scanner) slice\n";
                return exit_undefined;
            }
            return exit_ok;
        }
    };

    // ---- attack -------------------------------------------------------------

    struct attack_cmd {
        corpus_inputs corpus;
        split_inputs split;
        std::string table_path;
        std::string out;
        int query_k{-1};
        bool empty_as_failure{};
        CLI::Option* table_opt{};
        CLI::Option* out_opt{};
        CLI::Option* query_k_opt{};

        void add(CLI::App* app) {
            corpus.add(app, true);
            split.add(app);
            table_opt = app->add_option("--table", table_path, "Table built by 'build'");
            out_opt = app->add_option("--out", out, "Results file (default: standard output)");
            query_k_opt = app->add_option("--query-k", query_k, "Rules taken per observed feature (default: table top_k)");
            app->add_flag("--empty-as-failure", empty_as_failure,
                          "Score programs without findings as failures instead of excluding them");
        }

        // Explicit split flags must agree with what the table was built from.
        void check_flags_match(const table_provenance& prov) const {
            if (split.opts.mode->count() > 0 && split.mode != prov.mode) {
                throw input_error("table was built with split mode '" + prov.mode + "', not '" + split.mode + "'");
            }
            if (split.opts.target_domain->count() > 0 && split.target() != prov.target_domain) {
                throw input_error("table was built for a different target domain");
            }
            if (split.opts.seed->count() > 0 && split.seed != prov.seed) {
                throw input_error("table was built with a different split seed");
            }
            if (split.opts.fraction->count() > 0 && split.fraction != prov.fraction) {
                throw input_error("table was built with a different construction fraction");
            }
        }

        int run(const config_file& cfg, std::ostream& os) {
            corpus.apply(cfg);
            layer(table_opt, table_path, cfg, "paths", "table");
            layer(query_k_opt, query_k, cfg, "attack", "query_k");
            auto table = load_table(require_path(table_path, "--table"));
            if (query_k_opt->count() == 0 && query_k < 0) {
                query_k = table.params.top_k;
            }
            if (query_k < 0) {
                throw usage_error("--query-k must be >= 0");
            }
            if (!corpus.scanner.empty() && corpus.scanner != table.scanner) {
                throw input_error("table was built from scanner '" + table.scanner + "', not '" + corpus.scanner + "'");
            }
            if (!corpus.model.empty() && corpus.model != table.model) {
                throw input_error("table was built for model '" + table.model + "', not '" + corpus.model + "'");
            }
            const auto& prov = table.provenance;
            check_flags_match(prov);
            auto c = load(corpus, true);
            auto in_model = programs_of_model(c.programs, table.model);

            std::set<std::string> test;
            std::string mode_name = "in_sample";
            if (prov.mode == "all") {
                test = in_model;
            } else {
                auto plan = make_split(c.programs, parse_mode_or_throw(prov.mode), prov.target_domain, prov.seed,
                                       prov.fraction);
                std::vector<std::string> construction;
                for (const auto& id : plan.construction_programs) {
                    if (in_model.contains(id)) {
                        construction.push_back(id);
                    }
                }
                if (construction != prov.construction_programs) {
                    throw input_error("provenance mismatch: the manifest does not reproduce the table's construction split");
                }
                for (const auto& id : plan.test_programs) {
                    if (in_model.contains(id)) {
                        test.insert(id);
                    }
                }
                mode_name = prov.mode;
            }
            for (const auto& id : prov.mode == "all" ? std::vector<std::string>{} : prov.construction_programs) {
                if (test.contains(id)) {
                    throw input_error("provenance violation: test program '" + id + "' was used for construction");
                }
            }
            if (prov.target_domain && prov.mode == "cross_domain") {
                if (std::ranges::find(prov.construction_domains, *prov.target_domain) != prov.construction_domains.end()) {
                    throw input_error("provenance violation: target domain data was used for construction");
                }
            }
            if (test.empty()) {
                throw undefined_metric("no test programs for model '" + table.model + "'");
            }

            auto targets = collect_targets(test, c.findings, c.labels, table.scanner);
            auto ev = evaluate(table, targets, query_k, empty_as_failure ? empty_policy::as_failure : empty_policy::exclude);

            json summary = {{"asr", ev.asr},
                            {"acr", ev.acr},
                            {"n_scored", ev.n_scored},
                            {"n_excluded", ev.n_excluded},
                            {"mode", mode_name},
                            {"target_domain", prov.target_domain ? json(*prov.target_domain) : json(nullptr)},
                            {"seed", prov.seed},
                            {"query_k", query_k},
                            {"model", table.model},
                            {"scanner", table.scanner}};
            std::string text;
            for (const auto& r : ev.results) {
                text += to_json(r).dump() + '\n';
            }
            text += json{{"summary", summary}}.dump() + '\n';
            emit(out, text, os);
            if (!out.empty()) {
                os << summary.dump() << '\n';
            }
            return exit_ok;
        }
    };

    // ---- query --------------------------------------------------------------

    struct query_cmd {
        std::string table_path;
        std::vector<std::string> features;
        int query_k{-1};
        bool pretty{};
        CLI::Option* table_opt{};
        CLI::Option* query_k_opt{};

        void add(CLI::App* app) {
            table_opt = app->add_option("--table", table_path, "Table built by 'build'");
            app->add_option("--features,features", features, "Observed features")->delimiter(',');
            query_k_opt = app->add_option("--query-k", query_k, "Rules per feature (default: table top_k)");
            app->add_flag("--pretty", pretty, "Triage table");
        }

        int run(const config_file& cfg, std::ostream& os) {
            layer(table_opt, table_path, cfg, "paths", "table");
            layer(query_k_opt, query_k, cfg, "attack", "query_k");
            auto table = load_table(require_path(table_path, "--table"));
            if (query_k_opt->count() == 0 && query_k < 0) {
                query_k = table.params.top_k;
            }
            if (query_k < 0) {
                throw usage_error("--query-k must be >= 0");
            }
            if (features.empty()) {
                throw usage_error("no features given");
            }
            std::set<std::string> observed(features.begin(), features.end());
            json per = json::object();
            std::ostringstream text;
            if (pretty) {
                text << "Feature                                  Rank  Rule                                     PMI      Adjusted\n";
            }
            for (const auto& f : observed) {
                json arr = json::array();
                if (const auto* list = table.find(f)) {
                    auto n = std::min(list->size(), static_cast<std::size_t>(query_k));
                    for (std::size_t i = 0; i < n; ++i) {
                        const auto& e = (*list)[i];
                        arr.push_back({{"rank", e.rank}, {"rule_id", e.rule_id}, {"pmi", e.pmi}, {"adjusted", e.adjusted}});
                        if (pretty) {
                            char line[256];
                            std::snprintf(line, sizeof line, "%-40s %4d  %-40s %7.3f  %8.3f\n", i == 0 ? f.c_str() : "",
                                          e.rank, e.rule_id.c_str(), e.pmi, e.adjusted);
                            text << line;
                        }
                    }
                }
                if (pretty && arr.empty()) {
                    char line[256];
                    std::snprintf(line, sizeof line, "%-40s    -  (not in table)\n", f.c_str());
                    text << line;
                }
                per[f] = std::move(arr);
            }
            auto predicted = predict(table, observed, query_k);
            if (pretty) {
                text << "\n" << predicted.size() << " distinct rules predicted\n";
                os << text.str();
            } else {
                os << json{{"model", table.model}, {"query_k", query_k}, {"features", per}, {"predicted", predicted}}.dump(2)
                   << '\n';
            }
            return exit_ok;
        }
    };

    // ---- synth --------------------------------------------------------------

    struct synth_cmd {
        synth_params p;
        std::string out;

        void add(CLI::App* app) {
            app->add_option("--out", out, "Output directory");
            app->add_option("--seed", p.seed);
            app->add_option("--domains", p.n_domains);
            app->add_option("--tasks", p.tasks_per_domain, "Tasks per domain");
            app->add_option("--rephrasings", p.rephrasings);
            app->add_option("--features", p.feature_pool, "Feature pool size");
            app->add_option("--rules", p.rule_pool, "Noise rule pool size");
            app->add_option("--planted-rate", p.planted_recurrence_rate);
            app->add_option("--noise-rate", p.noise_rate);
            app->add_option("--features-per-task", p.features_per_task);
            app->add_option("--planted-per-feature", p.planted_per_feature);
            app->add_option("--findings-per-pair", p.findings_per_pair);
            app->add_option("--model", p.model);
            app->add_option("--scanner", p.scanner);
        }

        int run(std::ostream& os) {
            require_path(out, "--out");
            auto corpus = make_synth_corpus(p, {});
            write_synth_corpus(corpus, p, out);
            os << json{{"programs", corpus.programs.size()},
                       {"findings", corpus.findings.size()},
                       {"labels", corpus.labels.size()},
                       {"features", corpus.tax.actions.size()},
                       {"out", out}}
                            .dump()
               << '\n';
            return exit_ok;
        }
    };

    // ---- sweep --------------------------------------------------------------

    struct sweep_cmd {
        corpus_inputs corpus;
        hyper_inputs hyper;
        std::vector<int> ks{5, 10, 20, 25};
        std::vector<double> lambdas{0.0, 0.2, 0.4, 0.8};
        bool pretty{};
        std::string out;

        void add(CLI::App* app) {
            corpus.add(app, true);
            hyper.add(app);
            app->add_option("--ks", ks, "k values at fixed --lambda")->delimiter(',');
            app->add_option("--lambdas", lambdas, "lambda values at fixed --top-k")->delimiter(',');
            app->add_option("--out", out, "Report file (default: standard output)");
            app->add_flag("--pretty", pretty, "Two-panel table");
        }

        int run(const config_file& cfg, std::ostream& os) {
            corpus.apply(cfg);
            hyper.apply(cfg);
            auto c = load(corpus, true);
            auto slice = training_data(c, corpus, split_inputs{}, parse_count_or_throw(hyper.count));
            if (slice.counts.grand_total() == 0) {
                throw undefined_metric("no labeled findings to sweep over");
            }
            std::vector<double> fixed_lambda{hyper.params.lambda_div};
            std::vector<int> fixed_k{hyper.params.top_k};
            auto by_k = sweep(slice.counts, hyper.params.alpha, ks, fixed_lambda);
            auto by_lambda = sweep(slice.counts, hyper.params.alpha, fixed_k, lambdas);

            auto row_json = [](const sweep_row& r) {
                return json{{"k", r.top_k},
                            {"lambda", r.lambda_div},
                            {"mean_coverage", r.mean_coverage},
                            {"mean_list_size", r.mean_list_size},
                            {"max_use_1", r.max_use_1},
                            {"gini_1", r.gini_1}};
            };
            std::string text;
            if (pretty) {
                char line[256];
                std::snprintf(line, sizeof line, "lambda = %.1f                       | k = %d\n", hyper.params.lambda_div,
                              hyper.params.top_k);
                text += line;
                text += "k    Mean Cov_k  Avg |T[f]|  | lambda  Mean Cov_k  MaxUse_1  Gini_1\n";
                for (std::size_t i = 0; i < std::max(by_k.size(), by_lambda.size()); ++i) {
                    std::string left(29, ' ');
                    if (i < by_k.size()) {
                        std::snprintf(line, sizeof line, "%-4d %-11.3f %-11.3f ", by_k[i].top_k, by_k[i].mean_coverage,
                                      by_k[i].mean_list_size);
                        left = line;
                    }
                    std::string right;
                    if (i < by_lambda.size()) {
                        std::snprintf(line, sizeof line, " %-7.1f %-11.3f %-9lld %.3f", by_lambda[i].lambda_div,
                                      by_lambda[i].mean_coverage, static_cast<long long>(by_lambda[i].max_use_1),
                                      by_lambda[i].gini_1);
                        right = line;
                    }
                    text += left + "|" + right + "\n";
                }
            } else {
                json doc{{"model", slice.model}, {"scanner", slice.scanner}, {"by_k", json::array()}, {"by_lambda", json::array()}};
                for (const auto& r : by_k) {
                    doc["by_k"].push_back(row_json(r));
                }
                for (const auto& r : by_lambda) {
                    doc["by_lambda"].push_back(row_json(r));
                }
                text = doc.dump(2) + "\n";
            }
            emit(out, text, os);
            return exit_ok;
        }
    };

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Feature-to-vulnerability table toolkit"};
    app.name("fstab");
    app.require_subcommand(1);

    extract_cmd extract;
    build_cmd build;
    metrics_cmd metrics;
    attack_cmd attack;
    query_cmd query;
    synth_cmd synth;
    sweep_cmd sweep_c;
    auto* extract_app = app.add_subcommand("extract", "Label every finding location with a UI action");
    auto* build_app = app.add_subcommand("build", "Build the feature-to-rule table");
    auto* metrics_app = app.add_subcommand("metrics", "Recurrence metrics, universality gap and fingerprint");
    auto* attack_app = app.add_subcommand("attack", "Evaluate ASR/ACR on the table's test split");
    auto* query_app = app.add_subcommand("query", "Ranked rules for observed features");
    auto* synth_app = app.add_subcommand("synth", "Generate a synthetic corpus with planted recurrence");
    auto* sweep_app = app.add_subcommand("sweep", "Coverage and concentration over (k, lambda)");
    extract.add(extract_app);
    build.add(build_app);
    metrics.add(metrics_app);
    attack.add(attack_app);
    query.add(query_app);
    synth.add(synth_app);
    sweep_c.add(sweep_app);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return exit_ok;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "fstab: " << e.what() << '\n';
        return exit_usage;
    }

    try {
        auto cfg = config_file::from_env();
        if (extract_app->parsed()) {
            return extract.run(cfg, out);
        }
        if (build_app->parsed()) {
            return build.run(cfg, out);
        }
        if (metrics_app->parsed()) {
            return metrics.run(cfg, out, err);
        }
        if (attack_app->parsed()) {
            return attack.run(cfg, out);
        }
        if (query_app->parsed()) {
            return query.run(cfg, out);
        }
        if (synth_app->parsed()) {
            return synth.run(out);
        }
        if (sweep_app->parsed()) {
            return sweep_c.run(cfg, out);
        }
        err << "fstab: no subcommand\n";
        return exit_usage;
    } catch (const usage_error& e) {
        err << "fstab: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::invalid_argument& e) {
        err << "fstab: " << e.what() << '\n';
        return exit_usage;
    } catch (const input_error& e) {
        err << "fstab: " << e.what() << '\n';
        return exit_input;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "fstab: " << e.what() << '\n';
        return exit_input;
    } catch (const undefined_metric& e) {
        err << "fstab: undefined metric: " << e.what() << '\n';
        return exit_undefined;
    } catch (const std::domain_error& e) {
        err << "fstab: undefined metric: " << e.what() << '\n';
        return exit_undefined;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run(args, std::cout, std::cerr);
}

}  // namespace fstab::cli
