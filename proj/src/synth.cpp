#include "fstab/attack.hpp"
#include "fstab/jsonl.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace fstab {

namespace {

    std::string numbered(const char* format, int a, int b = 0, int c = 0) {
        char buf[64];
        std::snprintf(buf, sizeof buf, format, a, b, c);
        return buf;
    }

    double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

    class noise_pool {
      public:
        noise_pool(int size, std::mt19937_64& rng) : rng_(rng) {
            for (int i = 0; i < size; ++i) {
                rules_.push_back(numbered("rule-%04d", i));
            }
            reshuffle();
        }

        const std::string& next() {
            if (cursor_ == rules_.size()) {
                reshuffle();
            }
            return rules_[cursor_++];
        }

      private:
        void reshuffle() {
            for (std::size_t i = rules_.size(); i > 1; --i) {
                std::swap(rules_[i - 1], rules_[static_cast<std::size_t>(rng_() % i)]);
            }
            cursor_ = 0;
        }

        std::mt19937_64& rng_;
        std::vector<std::string> rules_;
        std::size_t cursor_{};
    };

    void validate(const synth_params& p) {
        for (int v : {p.n_domains, p.tasks_per_domain, p.rephrasings, p.feature_pool, p.rule_pool, p.features_per_task,
                      p.planted_per_feature, p.findings_per_pair}) {
            if (v < 1) {
                throw std::invalid_argument("synth sizes and pools must be >= 1");
            }
        }
        for (double r : {p.planted_recurrence_rate, p.noise_rate}) {
            if (!(r >= 0.0 && r <= 1.0)) {
                throw std::invalid_argument("synth rates must lie in [0, 1]");
            }
        }
    }

}  // namespace

synth_corpus make_synth_corpus(const synth_params& params, const std::filesystem::path& root) {
    validate(params);
    std::mt19937_64 rng(params.seed);
    noise_pool noise(params.rule_pool, rng);
    const int per_task = std::min(params.features_per_task, params.feature_pool);

    synth_corpus out;
    out.tax.version = "synth-v1";
    std::vector<std::string> feature_ids;
    std::vector<std::string> nonces;
    for (int i = 0; i < params.feature_pool; ++i) {
        auto id = numbered("feature_%03d", i);
        auto nonce = numbered("synthkw%03dx", i);
        feature_ids.push_back(id);
        nonces.push_back(nonce);
        out.tax.actions.push_back({id, {nonce}, {"/" + nonce}, {}, {},
                                   all_categories[static_cast<std::size_t>(i) % all_categories.size()]});
        auto& planted = out.planted[id];
        for (int j = 0; j < params.planted_per_feature; ++j) {
            planted.push_back(numbered("planted-rule-%03d-%d", i, j));
        }
    }

    for (int d = 0; d < params.n_domains; ++d) {
        for (int t = 0; t < params.tasks_per_domain; ++t) {
            for (int k = 0; k < params.rephrasings; ++k) {
                program_record rec;
                rec.program_id = numbered("p-d%02d-t%03d-k%d", d, t, k);
                rec.task_id = numbered("d%02d-t%03d", d, t);
                rec.rephrase_index = k;
                rec.domain = numbered("domain-%02d", d);
                rec.model = params.model;
                rec.source_root = root / "src" / rec.program_id;

                const std::string file = "app.py";
                std::string text = "from flask import Flask\n\napp = Flask(__name__)\n";
                int line = 3;
                for (int j = 0; j < per_task; ++j) {
                    int fi = (t * per_task + j) % params.feature_pool;
                    const auto& feature = feature_ids[static_cast<std::size_t>(fi)];
                    const auto& nonce = nonces[static_cast<std::size_t>(fi)];

                    std::vector<std::string> rules;
                    for (const auto& r : out.planted[feature]) {
                        if (unit(rng) < params.planted_recurrence_rate) {
                            rules.push_back(r);
                        }
                    }
                    if (unit(rng) < params.noise_rate) {
                        rules.push_back(noise.next());
                    }

                    text += "\n\n@app.route('/" + nonce + "')\ndef handle_" + nonce + "():\n";
                    line += 4;
                    const int body = line + 1;
                    for (int s = 0; s < params.findings_per_pair; ++s) {
                        text += "    step_" + std::to_string(s) + " = compute(" + std::to_string(s) + ")\n";
                    }
                    text += "    return None\n";
                    line += params.findings_per_pair + 1;

                    for (int s = 0; s < params.findings_per_pair; ++s) {
                        if (rules.empty()) {
                            break;
                        }
                        for (const auto& r : rules) {
                            out.findings.push_back({rec.program_id, file, body + s, r, params.scanner});
                        }
                        out.labels.push_back({rec.program_id, file, body + s, feature, 0.0, false});
                    }
                }
                out.sources[(std::filesystem::path("src") / rec.program_id / file).generic_string()] = text;
                out.programs.push_back(std::move(rec));
            }
        }
    }

    // Truth labels carry the score the extractor assigns to the planted action.
    for (auto& l : out.labels) {
        const auto& src = out.sources.at((std::filesystem::path("src") / l.program_id / l.file).generic_string());
        auto ctx = extract_context(src, l.line, language::python);
        l.confidence = score_action(*out.tax.find(l.action), ctx, weights{});
    }
    return out;
}

void write_synth_corpus(const synth_corpus& corpus, const synth_params& params, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_manifest(dir / "manifest.jsonl", corpus.programs);
    write_findings(dir / "findings.jsonl", corpus.findings);
    write_labels(dir / "labels.jsonl", corpus.labels);
    write_taxonomy(dir / "taxonomy.json", corpus.tax);
    for (const auto& [rel, text] : corpus.sources) {
        auto path = dir / rel;
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw input_error("cannot write '" + path.string() + "'");
        }
        out << text;
    }
    nlohmann::json p = {{"seed", params.seed},
                        {"n_domains", params.n_domains},
                        {"tasks_per_domain", params.tasks_per_domain},
                        {"rephrasings", params.rephrasings},
                        {"feature_pool", params.feature_pool},
                        {"rule_pool", params.rule_pool},
                        {"planted_recurrence_rate", params.planted_recurrence_rate},
                        {"noise_rate", params.noise_rate},
                        {"features_per_task", params.features_per_task},
                        {"planted_per_feature", params.planted_per_feature},
                        {"findings_per_pair", params.findings_per_pair},
                        {"model", params.model},
                        {"scanner", params.scanner}};
    jsonl::write_document(dir / "truth.json", {{"params", std::move(p)}, {"planted", corpus.planted}});
}

}  // namespace fstab
