// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/backbone.hpp"

#include <string>
#include <vector>

namespace fedpeft {

/// A closed-ended task: ordered answer set plus the prompt template applied
/// to every record ("{text}" is replaced by the record's text).
struct TaskDef {
    std::string name;
    std::vector<std::string> answers;
    std::string prompt_template = "{text}";
    void validate() const;
};

/// One generic JSONL record. MCQA sources fill prompt/options/answer_idx;
/// sentiment sources fill text/score.
struct RawRecord {
    std::string prompt;
    std::vector<std::string> options;
    int answer_idx = -1;
    std::string text;
    double score = 0.0;
    bool is_sentiment = false;
    int line = 0;
};

std::vector<RawRecord> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<RawRecord>& records);

enum class SentimentClass { negative = 0, neutral = 1, positive = 2 };

/// Thresholds at -0.05 / 0.05; the boundaries themselves map to neutral.
SentimentClass map_sentiment_score(double score);

struct SplitSet {
    std::vector<int> train;
    std::vector<int> validation;
    std::vector<int> test;
};

/// Shuffles, reserves floor(val_fraction * n) for validation, then
/// floor(test_fraction * n) for test; the remainder trains. Use
/// test_fraction = 0 when the source ships its own test split.
SplitSet make_splits(int n, double val_fraction, double test_fraction, Rng rng, bool allow_small = false);

struct FilterStats {
    int kept = 0;
    int dropped = 0;
};

/// Drops records with empty options or an out-of-range correct index.
std::vector<RawRecord> filter_valid_mcqa(const std::vector<RawRecord>& records, FilterStats* stats = nullptr);

struct SynthConfig {
    int classes = 4;
    int instances = 1000;
    double noise = 0.1;
};

/// Desk-scale synthetic task: a class-indicative keyword in the prompt
/// determines the gold label; with probability `noise` the label is
/// resampled uniformly, so the Bayes accuracy is 1 - noise * (K-1) / K.
std::vector<RawRecord> synth_task(const SynthConfig& cfg, Rng rng);

/// The label a keyword-lookup classifier would assign (class of the keyword
/// embedded in the prompt); test oracle for the synthetic task.
int synth_keyword_label(const RawRecord& rec, int classes);

TaskDef synth_task_def(int classes);
TaskDef sentiment_task_def(const std::string& name = "sentiment");

/// Converts records to tokenized instances under the task's template,
/// applying prompt truncation at `max_len`.
std::vector<Instance> make_instances(const std::vector<RawRecord>& records, const TaskDef& task, int max_len);

} // namespace fedpeft
