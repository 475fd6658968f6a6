// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/datasets.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>

namespace fedpeft {

using nlohmann::json;

void TaskDef::validate() const {
    if (answers.size() < 2) throw ConfigError("task: answer set must have at least 2 candidates");
    std::set<std::string> uniq(answers.begin(), answers.end());
    if (uniq.size() != answers.size()) throw ConfigError("task: answer candidates must be distinct");
}

std::vector<RawRecord> load_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_jsonl: cannot open " + path);
    std::vector<RawRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("load_jsonl: line " + std::to_string(line_no) + ": " + e.what());
        }
        RawRecord rec;
        rec.line = line_no;
        if (j.contains("text") || j.contains("score")) {
            if (!j.contains("text") || !j["text"].is_string())
                throw DataError("load_jsonl: line " + std::to_string(line_no) + ": missing text field");
            if (!j.contains("score") || !j["score"].is_number())
                throw DataError("load_jsonl: line " + std::to_string(line_no) + ": missing score field");
            rec.is_sentiment = true;
            rec.text = j["text"].get<std::string>();
            rec.score = j["score"].get<double>();
        } else {
            if (!j.contains("prompt") || !j["prompt"].is_string())
                throw DataError("load_jsonl: line " + std::to_string(line_no) + ": missing prompt field");
            if (!j.contains("options") || !j["options"].is_array())
                throw DataError("load_jsonl: line " + std::to_string(line_no) + ": missing options field");
            if (!j.contains("answer_idx") || !j["answer_idx"].is_number_integer())
                throw DataError("load_jsonl: line " + std::to_string(line_no) + ": missing answer_idx field");
            rec.prompt = j["prompt"].get<std::string>();
            for (const auto& o : j["options"]) {
                if (!o.is_string())
                    throw DataError("load_jsonl: line " + std::to_string(line_no) + ": non-string option");
                rec.options.push_back(o.get<std::string>());
            }
            rec.answer_idx = j["answer_idx"].get<int>();
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void save_jsonl(const std::string& path, const std::vector<RawRecord>& records) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_jsonl: cannot open " + path + " for writing");
    for (const auto& rec : records) {
        json j;
        if (rec.is_sentiment) {
            j["text"] = rec.text;
            j["score"] = rec.score;
        } else {
            j["prompt"] = rec.prompt;
            j["options"] = rec.options;
            j["answer_idx"] = rec.answer_idx;
        }
        os << j.dump() << "\n";
    }
}

SentimentClass map_sentiment_score(double score) {
    if (!std::isfinite(score)) throw NumericError("map_sentiment_score: score must be finite");
    if (score < -0.05) return SentimentClass::negative;
    if (score > 0.05) return SentimentClass::positive;
    return SentimentClass::neutral;
}

SplitSet make_splits(int n, double val_fraction, double test_fraction, Rng rng, bool allow_small) {
    if (n < 10 && !allow_small) throw ConfigError("make_splits: fewer than 10 instances (pass the override)");
    if (val_fraction < 0 || test_fraction < 0 || val_fraction + test_fraction >= 1.0)
        throw ConfigError("make_splits: bad fractions");
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    const int n_val = static_cast<int>(std::floor(val_fraction * n));
    const int n_test = static_cast<int>(std::floor(test_fraction * n));
    SplitSet s;
    s.validation.assign(idx.begin(), idx.begin() + n_val);
    s.test.assign(idx.begin() + n_val, idx.begin() + n_val + n_test);
    s.train.assign(idx.begin() + n_val + n_test, idx.end());
    return s;
}

std::vector<RawRecord> filter_valid_mcqa(const std::vector<RawRecord>& records, FilterStats* stats) {
    std::vector<RawRecord> out;
    FilterStats st;
    for (const auto& rec : records) {
        bool valid = !rec.is_sentiment && !rec.options.empty() && rec.answer_idx >= 0 &&
                     rec.answer_idx < static_cast<int>(rec.options.size());
        if (valid)
            for (const auto& o : rec.options)
                if (o.empty()) valid = false;
        if (valid) {
            out.push_back(rec);
            ++st.kept;
        } else {
            ++st.dropped;
        }
    }
    if (stats) *stats = st;
    return out;
}

namespace {
const std::vector<std::string> kKeywords = {"alpha", "bravo", "coral", "delta",
                                            "ember", "frost", "grove", "haze"};

std::string class_keyword(int c) {
    std::string kw = kKeywords[static_cast<std::size_t>(c) % kKeywords.size()];
    if (c >= static_cast<int>(kKeywords.size())) kw += std::to_string(c / static_cast<int>(kKeywords.size()));
    return kw;
}
} // namespace

std::vector<RawRecord> synth_task(const SynthConfig& cfg, Rng rng) {
    if (cfg.classes < 2) throw ConfigError("synth_task: need at least 2 classes");
    if (cfg.noise < 0.0 || cfg.noise >= 0.5) throw ConfigError("synth_task: noise must be in [0, 0.5)");
    Rng r = rng.child(streams::synth);
    std::vector<std::string> options;
    for (int c = 0; c < cfg.classes; ++c) options.push_back(std::string(1, static_cast<char>('A' + c)));
    std::vector<RawRecord> out;
    out.reserve(static_cast<std::size_t>(cfg.instances));
    for (int i = 0; i < cfg.instances; ++i) {
        const int cls = static_cast<int>(r.below(static_cast<std::uint64_t>(cfg.classes)));
        std::string filler;
        filler += static_cast<char>('a' + r.below(26));
        filler += static_cast<char>('a' + r.below(26));
        RawRecord rec;
        rec.prompt = "in " + filler + ": " + class_keyword(cls) + ". ans:";
        rec.options = options;
        rec.answer_idx = cls;
        if (r.uniform() < cfg.noise)
            rec.answer_idx = static_cast<int>(r.below(static_cast<std::uint64_t>(cfg.classes)));
        rec.line = i + 1;
        out.push_back(std::move(rec));
    }
    return out;
}

int synth_keyword_label(const RawRecord& rec, int classes) {
    for (int c = 0; c < classes; ++c) {
        if (rec.prompt.find(": " + class_keyword(c) + ".") != std::string::npos) return c;
    }
    throw DataError("synth_keyword_label: no class keyword in prompt");
}

TaskDef synth_task_def(int classes) {
    TaskDef t;
    t.name = "synthetic";
    for (int c = 0; c < classes; ++c) t.answers.push_back(std::string(1, static_cast<char>('A' + c)));
    t.prompt_template = "{text}";
    t.validate();
    return t;
}

TaskDef sentiment_task_def(const std::string& name) {
    TaskDef t;
    t.name = name;
    t.answers = {"A", "B", "C"}; // negative, neutral, positive
    t.prompt_template = "sentiment of: {text}\nans:";
    t.validate();
    return t;
}

std::vector<Instance> make_instances(const std::vector<RawRecord>& records, const TaskDef& task, int max_len) {
    task.validate();
    std::vector<std::vector<int>> cand_tokens;
    for (const auto& a : task.answers) cand_tokens.push_back(tokenize(a));
    std::vector<Instance> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        const std::string& text = rec.is_sentiment ? rec.text : rec.prompt;
        std::string prompt = task.prompt_template;
        if (auto pos = prompt.find("{text}"); pos != std::string::npos) prompt.replace(pos, 6, text);
        Instance inst;
        inst.prompt = tokenize(prompt);
        inst.candidates = cand_tokens;
        if (rec.is_sentiment) {
            inst.gold = static_cast<int>(map_sentiment_score(rec.score));
        } else {
            if (rec.answer_idx < 0 || rec.answer_idx >= static_cast<int>(task.answers.size()))
                throw DataError("make_instances: answer index out of range at line " + std::to_string(rec.line));
            inst.gold = rec.answer_idx;
        }
        inst.completion = cand_tokens[static_cast<std::size_t>(inst.gold)];
        out.push_back(truncate_prompt(std::move(inst), max_len));
    }
    return out;
}

} // namespace fedpeft
