#include "stereorecon/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <torch/torch.h>

#include "stereorecon/error.hpp"
#include "stereorecon/random.hpp"

namespace stereorecon {

std::string to_string(ReaderGroup group) {
    switch (group) {
        case ReaderGroup::expert: return "expert";
        case ReaderGroup::non_expert: return "non_expert";
        case ReaderGroup::simulated: return "simulated";
    }
    return "unknown";
}

ReaderGroup parse_reader_group(const std::string& text) {
    if (text == "expert") return ReaderGroup::expert;
    if (text == "non_expert") return ReaderGroup::non_expert;
    if (text == "simulated") return ReaderGroup::simulated;
    throw ConfigError("unknown reader group '" + text + "' (expected expert, non_expert or simulated)");
}

namespace {

bool csv_safe(const std::string& s) { return s.find_first_of(",\"\r\n") == std::string::npos; }

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

struct Counts {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> wins;  // wins[i][j]: i beat j

    std::size_t index(const std::string& id) const {
        return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
    }
};

Counts count_outcomes(const std::vector<ComparisonRecord>& records) {
    Counts c;
    std::set<std::string> ids;
    for (const auto& r : records) {
        ids.insert(r.item_a);
        ids.insert(r.item_b);
    }
    c.ids.assign(ids.begin(), ids.end());
    c.wins.assign(c.ids.size(), std::vector<double>(c.ids.size(), 0.0));
    for (const auto& r : records) c.wins[c.index(r.winner())][c.index(r.loser())] += 1.0;
    return c;
}

double log_likelihood(const Counts& c, const std::vector<double>& worth) {
    double ll = 0.0;
    for (std::size_t i = 0; i < c.ids.size(); ++i)
        for (std::size_t j = 0; j < c.ids.size(); ++j)
            if (c.wins[i][j] > 0.0) ll += c.wins[i][j] * std::log(worth[i] / (worth[i] + worth[j]));
    return ll;
}

std::vector<std::vector<std::string>> components(const Counts& c) {
    const auto n = c.ids.size();
    std::vector<int> label(n, -1);
    std::vector<std::vector<std::string>> out;
    for (std::size_t s = 0; s < n; ++s) {
        if (label[s] >= 0) continue;
        const int id = static_cast<int>(out.size());
        out.emplace_back();
        std::vector<std::size_t> stack{s};
        label[s] = id;
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            out.back().push_back(c.ids[i]);
            for (std::size_t j = 0; j < n; ++j) {
                if (label[j] < 0 && c.wins[i][j] + c.wins[j][i] > 0.0) {
                    label[j] = id;
                    stack.push_back(j);
                }
            }
        }
        std::sort(out.back().begin(), out.back().end());
    }
    return out;
}

struct QuestionTally {
    std::string item_a;
    std::string item_b;
    std::map<std::string, std::int64_t> votes;

    std::int64_t votes_for(const std::string& id) const {
        auto it = votes.find(id);
        return it == votes.end() ? 0 : it->second;
    }
    /// Majority winner, or empty on a tie.
    std::string majority() const {
        const auto a = votes_for(item_a);
        const auto b = votes_for(item_b);
        if (a == b) return {};
        return a > b ? item_a : item_b;
    }
};

std::map<std::string, QuestionTally> tally(const std::vector<ComparisonRecord>& records,
                                           std::optional<ReaderGroup> group) {
    std::map<std::string, QuestionTally> out;
    for (const auto& r : records) {
        if (group && r.group != *group) continue;
        auto [it, inserted] = out.try_emplace(r.question_id);
        auto& q = it->second;
        if (inserted) {
            q.item_a = std::min(r.item_a, r.item_b);
            q.item_b = std::max(r.item_a, r.item_b);
        } else if (std::min(r.item_a, r.item_b) != q.item_a || std::max(r.item_a, r.item_b) != q.item_b) {
            throw DataError("question '" + r.question_id + "' compares different items across records");
        }
        ++q.votes[r.winner()];
    }
    return out;
}

}  // namespace

void validate(const ComparisonRecord& r) {
    for (const auto* field : {&r.question_id, &r.reader_id, &r.item_a, &r.item_b}) {
        if (field->empty()) throw DataError("comparison record has an empty id");
        if (!csv_safe(*field)) throw DataError("id '" + *field + "' contains a CSV separator or quote");
    }
    if (!csv_safe(r.timestamp)) throw DataError("timestamp contains a CSV separator or quote");
    if (r.item_a == r.item_b) throw DataError("comparison record compares '" + r.item_a + "' with itself");
}

std::string to_csv_row(const ComparisonRecord& r) {
    validate(r);
    return r.question_id + ',' + r.reader_id + ',' + to_string(r.group) + ',' + r.item_a + ',' + r.item_b + ',' +
           (r.choice == Choice::A ? "A" : "B") + ',' + r.timestamp;
}

void write_records_csv(std::ostream& out, const std::vector<ComparisonRecord>& records) {
    out << kRecordCsvHeader << '\n';
    for (const auto& r : records) out << to_csv_row(r) << '\n';
}

std::vector<ComparisonRecord> read_records_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("comparison CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kRecordCsvHeader) throw DataError("unexpected comparison CSV header: " + line);
    std::vector<ComparisonRecord> records;
    std::int64_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 7) throw DataError("line " + std::to_string(number) + ": expected 7 fields");
        ComparisonRecord r;
        r.question_id = f[0];
        r.reader_id = f[1];
        try {
            r.group = parse_reader_group(f[2]);
        } catch (const ConfigError& e) {
            throw DataError("line " + std::to_string(number) + ": " + e.what());
        }
        r.item_a = f[3];
        r.item_b = f[4];
        if (f[5] == "A")
            r.choice = Choice::A;
        else if (f[5] == "B")
            r.choice = Choice::B;
        else
            throw DataError("line " + std::to_string(number) + ": choice must be A or B");
        r.timestamp = f[6];
        try {
            validate(r);
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(number) + ": " + e.what());
        }
        records.push_back(std::move(r));
    }
    return records;
}

const WorthEstimate& BradleyTerryFit::at(const std::string& model_id) const {
    for (const auto& e : estimates)
        if (e.model_id == model_id) return e;
    throw ConfigError("no worth estimate for '" + model_id + "'");
}

double BradleyTerryFit::probability(const std::string& a, const std::string& b) const {
    const double wa = at(a).worth;
    const double wb = at(b).worth;
    return wa / (wa + wb);
}

BradleyTerryFit fit_bradley_terry(const std::vector<ComparisonRecord>& records, const std::string& reference,
                                  const BradleyTerryOptions& options) {
    if (records.empty()) throw DataError("no comparison records");
    for (const auto& r : records) validate(r);
    auto c = count_outcomes(records);
    const auto n = c.ids.size();
    if (!std::binary_search(c.ids.begin(), c.ids.end(), reference))
        throw DataError("reference '" + reference + "' does not appear in any comparison");

    const auto parts = components(c);
    if (parts.size() > 1) {
        std::string msg = "comparison graph is disconnected; components:";
        for (const auto& part : parts) {
            msg += " {";
            for (std::size_t k = 0; k < part.size(); ++k) msg += (k ? ", " : "") + part[k];
            msg += "}";
        }
        throw DataError(msg);
    }

    std::vector<bool> smoothed(n, false);
    const auto raw = c.wins;
    for (std::size_t i = 0; i < n; ++i) {
        double won = 0.0;
        double lost = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            won += raw[i][j];
            lost += raw[j][i];
        }
        if (won > 0.0 && lost > 0.0) continue;
        smoothed[i] = true;
        for (std::size_t j = 0; j < n; ++j) {
            if (raw[i][j] + raw[j][i] == 0.0) continue;
            if (won == 0.0) c.wins[i][j] += options.smoothing;
            if (lost == 0.0) c.wins[j][i] += options.smoothing;
        }
    }

    std::vector<double> worth(n, 1.0);
    std::vector<double> total_wins(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) total_wins[i] += c.wins[i][j];

    BradleyTerryFit fit;
    fit.reference_id = reference;
    double ll = log_likelihood(c, worth);
    for (fit.iterations = 1; fit.iterations <= options.max_iterations; ++fit.iterations) {
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) {
            double denom = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double games = c.wins[i][j] + c.wins[j][i];
                if (j != i && games > 0.0) denom += games / (worth[i] + worth[j]);
            }
            next[i] = total_wins[i] / denom;
        }
        double log_mean = 0.0;
        for (double w : next) log_mean += std::log(w);
        log_mean /= static_cast<double>(n);
        for (auto& w : next) w /= std::exp(log_mean);
        worth = std::move(next);
        const double next_ll = log_likelihood(c, worth);
        const bool done = std::abs(next_ll - ll) < options.tolerance;
        ll = next_ll;
        if (done) {
            fit.converged = true;
            break;
        }
    }
    fit.iterations = std::min(fit.iterations, options.max_iterations);
    fit.log_likelihood = ll;

    const auto ref = c.index(reference);
    const double ref_worth = worth[ref];
    for (auto& w : worth) w /= ref_worth;

    // Observed information of the log-worths with the reference held fixed.
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < n; ++i)
        if (i != ref) free.push_back(i);
    std::vector<double> variance(n, 0.0);
    if (!free.empty()) {
        auto info = torch::zeros({static_cast<std::int64_t>(free.size()), static_cast<std::int64_t>(free.size())},
                                 torch::kFloat64);
        auto acc = info.accessor<double, 2>();
        for (std::size_t a = 0; a < free.size(); ++a) {
            const auto i = free[a];
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double games = c.wins[i][j] + c.wins[j][i];
                const double p = worth[i] / (worth[i] + worth[j]);
                acc[a][a] += games * p * (1.0 - p);
            }
            for (std::size_t b = 0; b < free.size(); ++b) {
                if (b == a) continue;
                const auto j = free[b];
                const double games = c.wins[i][j] + c.wins[j][i];
                const double p = worth[i] / (worth[i] + worth[j]);
                acc[a][b] = -games * p * (1.0 - p);
            }
        }
        auto cov = torch::linalg_inv(info);
        for (std::size_t a = 0; a < free.size(); ++a) variance[free[a]] = cov[a][a].item<double>();
    }

    for (std::size_t i = 0; i < n; ++i) {
        WorthEstimate e;
        e.model_id = c.ids[i];
        e.worth = worth[i];
        e.log_worth = std::log(worth[i]);
        e.std_error = std::sqrt(std::max(0.0, variance[i]));
        e.reference_id = reference;
        e.smoothed = smoothed[i];
        fit.estimates.push_back(e);
    }
    return fit;
}

double bradley_terry_log_likelihood(const std::vector<ComparisonRecord>& records,
                                    const std::map<std::string, double>& worths) {
    double ll = 0.0;
    for (const auto& r : records) {
        auto w = worths.find(r.winner());
        auto l = worths.find(r.loser());
        if (w == worths.end() || l == worths.end()) throw ConfigError("worths do not cover every record item");
        ll += std::log(w->second / (w->second + l->second));
    }
    return ll;
}

WinRate majority_vote_win_rate(const std::vector<ComparisonRecord>& records, const std::string& model_id,
                               std::optional<std::int64_t> denominator, std::optional<ReaderGroup> group) {
    WinRate rate;
    rate.model_id = model_id;
    for (const auto& [qid, q] : tally(records, group)) {
        if (q.item_a != model_id && q.item_b != model_id) continue;
        ++rate.questions;
        const auto winner = q.majority();
        if (winner.empty())
            ++rate.ties;
        else if (winner == model_id)
            ++rate.wins;
    }
    const auto denom = denominator.value_or(rate.questions);
    if (denominator && *denominator <= 0) throw ConfigError("win-rate denominator must be positive");
    rate.percentage = denom > 0 ? 100.0 * static_cast<double>(rate.wins) / static_cast<double>(denom) : 0.0;
    return rate;
}

double within_group_disagreement(const std::vector<ComparisonRecord>& records, ReaderGroup group) {
    std::set<std::string> readers;
    for (const auto& r : records)
        if (r.group == group) readers.insert(r.reader_id);
    if (readers.size() < 2) throw ConfigError("group '" + to_string(group) + "' needs at least two readers");
    const auto questions = tally(records, group);
    double sum = 0.0;
    for (const auto& [qid, q] : questions) {
        const auto a = q.votes_for(q.item_a);
        const auto b = q.votes_for(q.item_b);
        sum += static_cast<double>(std::min(a, b)) / static_cast<double>(a + b);
    }
    return sum / static_cast<double>(questions.size());
}

double cross_group_agreement(const std::vector<ComparisonRecord>& records, ReaderGroup group_a,
                             ReaderGroup group_b) {
    const auto qa = tally(records, group_a);
    const auto qb = tally(records, group_b);
    std::int64_t shared = 0;
    std::int64_t agree = 0;
    for (const auto& [qid, q] : qa) {
        auto it = qb.find(qid);
        if (it == qb.end()) continue;
        ++shared;
        if (q.majority() == it->second.majority()) ++agree;
    }
    if (shared == 0) throw ConfigError("the two groups share no questions");
    return static_cast<double>(agree) / static_cast<double>(shared);
}

std::vector<ComparisonRecord> simulate_comparisons(const std::map<std::string, double>& worths,
                                                   const std::vector<std::pair<std::string, std::string>>& questions,
                                                   std::int64_t readers, std::uint64_t seed, ReaderGroup group) {
    std::vector<ComparisonRecord> out;
    out.reserve(questions.size() * static_cast<std::size_t>(std::max<std::int64_t>(readers, 0)));
    for (std::int64_t reader = 0; reader < readers; ++reader) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(reader)));
        for (std::size_t q = 0; q < questions.size(); ++q) {
            auto [a, b] = questions[q];
            if (uniform01(rng) < 0.5) std::swap(a, b);
            const double wa = worths.at(a);
            const double wb = worths.at(b);
            ComparisonRecord r;
            r.question_id = "q" + std::to_string(q);
            r.reader_id = "r" + std::to_string(reader);
            r.group = group;
            r.item_a = a;
            r.item_b = b;
            r.choice = uniform01(rng) < wa / (wa + wb) ? Choice::A : Choice::B;
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::vector<RankingRow> ranking_table(const BradleyTerryFit& fit, const std::vector<ComparisonRecord>& records,
                                      std::optional<std::int64_t> win_denominator) {
    std::vector<RankingRow> rows;
    for (const auto& e : fit.estimates) {
        RankingRow row;
        row.model_id = e.model_id;
        row.log_worth = e.log_worth;
        row.std_error = e.std_error;
        if (e.model_id != fit.reference_id) row.win_rate = majority_vote_win_rate(records, e.model_id, win_denominator);
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RankingRow& a, const RankingRow& b) { return a.log_worth > b.log_worth; });
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = static_cast<std::int64_t>(i + 1);
    return rows;
}

std::string ranking_table_text(const std::vector<RankingRow>& rows, const std::string& reference_id) {
    std::ostringstream out;
    out << std::left << std::setw(6) << "rank" << std::setw(28) << "model" << std::setw(20) << "log-worth"
        << "win %\n";
    for (const auto& row : rows) {
        std::ostringstream lw;
        lw << std::fixed << std::setprecision(2) << row.log_worth;
        if (row.model_id != reference_id) lw << " +- " << row.std_error;
        out << std::left << std::setw(6) << row.rank << std::setw(28) << row.model_id << std::setw(20) << lw.str();
        if (row.win_rate) {
            out << std::fixed << std::setprecision(1) << row.win_rate->percentage;
            if (row.win_rate->ties > 0) out << " (" << row.win_rate->ties << " tied)";
        } else {
            out << "reference";
        }
        out << '\n';
    }
    out << "standard errors: plain Fisher information, reference '" << reference_id << "' fixed at 0\n";
    return out.str();
}

std::string ranking_table_csv(const std::vector<RankingRow>& rows) {
    std::ostringstream out;
    out << "rank,model_id,log_worth,std_error,win_percentage,wins,questions,ties\n";
    out << std::setprecision(12);
    for (const auto& row : rows) {
        out << row.rank << ',' << row.model_id << ',' << row.log_worth << ',' << row.std_error << ',';
        if (row.win_rate)
            out << row.win_rate->percentage << ',' << row.win_rate->wins << ',' << row.win_rate->questions << ','
                << row.win_rate->ties;
        else
            out << ",,,";
        out << '\n';
    }
    return out.str();
}

}  // namespace stereorecon
