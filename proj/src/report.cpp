// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/report.hpp"

#include "fedpeft/errors.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <sstream>

namespace fedpeft {

using nlohmann::json;

json report_to_json(const ScenarioReport& rep, const json& config) {
    json j;
    j["config"] = config;
    j["scenario"] = rep.scenario;
    j["accuracy"] = rep.accuracy;
    json rounds = json::array();
    for (const auto& r : rep.rounds) {
        json jr;
        jr["round"] = r.round;
        jr["bytes_up"] = r.bytes_up;
        jr["bytes_down"] = r.bytes_down;
        jr["mean_loss"] = r.mean_loss;
        jr["phi_checksum"] = r.phi_checksum;
        if (r.val_accuracy >= 0.0) jr["val_accuracy"] = r.val_accuracy;
        rounds.push_back(jr);
    }
    j["per_round"] = rounds;
    j["comm_cost_gb"] = rep.comm_cost_gb;
    j["memory_gb"] = rep.memory_gb;
    j["trainable_bytes_per_node"] = rep.trainable_bytes_per_node;
    j["participants"] = rep.participants;
    j["node_peak_bytes"] = rep.node_peak_bytes;
    j["eval_fingerprint"] = rep.eval_fp;
    if (!rep.node_accuracies.empty()) j["node_accuracies"] = rep.node_accuracies;
    return j;
}

ScenarioReport report_from_json(const json& j) {
    ScenarioReport rep;
    rep.scenario = j.at("scenario").get<std::string>();
    rep.accuracy = j.at("accuracy").get<double>();
    for (const auto& jr : j.at("per_round")) {
        RoundLog r;
        r.round = jr.at("round").get<int>();
        r.bytes_up = jr.at("bytes_up").get<long>();
        r.bytes_down = jr.at("bytes_down").get<long>();
        r.mean_loss = jr.at("mean_loss").get<double>();
        r.phi_checksum = jr.value("phi_checksum", std::uint64_t{0});
        r.val_accuracy = jr.value("val_accuracy", -1.0);
        rep.rounds.push_back(r);
    }
    rep.comm_cost_gb = j.at("comm_cost_gb").get<double>();
    rep.memory_gb = j.at("memory_gb").get<double>();
    rep.trainable_bytes_per_node = j.value("trainable_bytes_per_node", 0L);
    rep.participants = j.value("participants", 0);
    rep.node_peak_bytes = j.value("node_peak_bytes", std::vector<double>{});
    rep.eval_fp = j.value("eval_fingerprint", std::uint64_t{0});
    rep.node_accuracies = j.value("node_accuracies", std::vector<double>{});
    return rep;
}

namespace {
std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}
} // namespace

std::string round_csv(const ScenarioReport& rep) {
    std::ostringstream os;
    os << "round,bytes_up,bytes_down,mean_loss,val_accuracy\n";
    for (const auto& r : rep.rounds)
        os << r.round << "," << r.bytes_up << "," << r.bytes_down << "," << fmt6(r.mean_loss) << ","
           << fmt6(r.val_accuracy) << "\n";
    return os.str();
}

ComparisonRow compare_scenarios(const ScenarioReport& centralized, const ScenarioReport& federated,
                                const ScenarioReport& single_institution, const std::string& method) {
    if (centralized.eval_fp != federated.eval_fp || federated.eval_fp != single_institution.eval_fp)
        throw DataError("compare_scenarios: reports were evaluated on different splits");
    ComparisonRow row;
    row.method = method;
    row.centralized = centralized.accuracy;
    row.single_institution = single_institution.accuracy;
    row.federated = federated.accuracy;
    row.delta_fed_centralized = federated.accuracy - centralized.accuracy;
    row.delta_fed_single = federated.accuracy - single_institution.accuracy;
    row.comm_cost_gb = federated.comm_cost_gb;
    row.memory_gb = federated.memory_gb;
    return row;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::ostringstream os;
    os << "method,centralized,single_institution,federated,delta_fed_centralized,delta_fed_single,"
          "comm_cost_gb,memory_gb\n";
    for (const auto& r : rows) {
        char cost[40];
        std::snprintf(cost, sizeof(cost), "%.9f", r.comm_cost_gb);
        char mem[40];
        std::snprintf(mem, sizeof(mem), "%.9f", r.memory_gb);
        os << r.method << "," << fmt6(r.centralized) << "," << fmt6(r.single_institution) << ","
           << fmt6(r.federated) << "," << fmt6(r.delta_fed_centralized) << "," << fmt6(r.delta_fed_single) << ","
           << cost << "," << mem << "\n";
    }
    return os.str();
}

json comparison_json(const std::vector<ComparisonRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        json j;
        j["method"] = r.method;
        j["centralized"] = r.centralized;
        j["single_institution"] = r.single_institution;
        j["federated"] = r.federated;
        j["delta_fed_centralized"] = r.delta_fed_centralized;
        j["delta_fed_single"] = r.delta_fed_single;
        j["comm_cost_gb"] = r.comm_cost_gb;
        j["memory_gb"] = r.memory_gb;
        arr.push_back(j);
    }
    return arr;
}

namespace {
std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}
} // namespace

std::string chart_svg(const std::string& comparison_csv_text) {
    std::istringstream is(comparison_csv_text);
    std::string line;
    if (!std::getline(is, line)) throw DataError("chart: empty input");
    const auto header = split_line(line);
    if (header.size() < 4 || header[0] != "method")
        throw DataError("chart: unrecognized comparison header");

    struct Row {
        std::string method;
        double acc[3]; // centralized, single, federated
    };
    std::vector<Row> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split_line(line);
        if (f.size() != header.size()) throw DataError("chart: ragged row '" + line + "'");
        Row r;
        r.method = f[0];
        try {
            for (int i = 0; i < 3; ++i) r.acc[i] = std::stod(f[static_cast<std::size_t>(1 + i)]);
        } catch (const std::exception&) {
            throw DataError("chart: non-numeric accuracy in row '" + line + "'");
        }
        rows.push_back(r);
    }
    if (rows.empty()) throw DataError("chart: no data rows");

    const int group_w = 130, bar_w = 34, gap = 4, left = 50, base = 240, plot_h = 200, top = 20;
    const int width = left + group_w * static_cast<int>(rows.size()) + 20;
    const int height = base + 40;
    static const char* kFill[3] = {"#4878a8", "#e0a030", "#58a060"};
    static const char* kName[3] = {"centralized", "single", "federated"};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const int y = base - plot_h * tick / 4;
        os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << (width - 10) << "\" y2=\"" << y
           << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
        os << "<text x=\"" << (left - 6) << "\" y=\"" << (y + 4)
           << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"monospace\">" << fmt6(0.25 * tick).substr(0, 4)
           << "</text>\n";
    }
    for (std::size_t g = 0; g < rows.size(); ++g) {
        const int gx = left + static_cast<int>(g) * group_w + 10;
        for (int i = 0; i < 3; ++i) {
            const double a = std::min(1.0, std::max(0.0, rows[g].acc[i]));
            const int h = static_cast<int>(a * plot_h + 0.5);
            const int x = gx + i * (bar_w + gap);
            os << "<rect x=\"" << x << "\" y=\"" << (base - h) << "\" width=\"" << bar_w << "\" height=\"" << h
               << "\" fill=\"" << kFill[i] << "\"><title>" << rows[g].method << " " << kName[i] << " "
               << fmt6(rows[g].acc[i]) << "</title></rect>\n";
        }
        os << "<text x=\"" << (gx + (3 * (bar_w + gap) - gap) / 2) << "\" y=\"" << (base + 16)
           << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"monospace\">" << rows[g].method
           << "</text>\n";
    }
    for (int i = 0; i < 3; ++i) {
        const int x = left + i * 110;
        os << "<rect x=\"" << x << "\" y=\"" << (top - 12) << "\" width=\"12\" height=\"12\" fill=\"" << kFill[i]
           << "\"/>\n";
        os << "<text x=\"" << (x + 16) << "\" y=\"" << (top - 2)
           << "\" font-size=\"11\" font-family=\"monospace\">" << kName[i] << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace fedpeft
