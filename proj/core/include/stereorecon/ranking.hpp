#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stereorecon {

enum class ReaderGroup { expert, non_expert, simulated };

std::string to_string(ReaderGroup group);
ReaderGroup parse_reader_group(const std::string& text);

enum class Choice { A, B };

/// One forced choice between two candidates, as shown to one reader.
struct ComparisonRecord {
    std::string question_id;
    std::string reader_id;
    ReaderGroup group = ReaderGroup::simulated;
    std::string item_a;
    std::string item_b;
    Choice choice = Choice::A;
    std::string timestamp;

    const std::string& winner() const { return choice == Choice::A ? item_a : item_b; }
    const std::string& loser() const { return choice == Choice::A ? item_b : item_a; }
    bool operator==(const ComparisonRecord&) const = default;
};

/// Throws DataError when ids are empty, equal or contain CSV separators.
void validate(const ComparisonRecord& record);

inline constexpr const char* kRecordCsvHeader = "question_id,reader_id,group,item_a,item_b,choice,timestamp";

std::string to_csv_row(const ComparisonRecord& record);
void write_records_csv(std::ostream& out, const std::vector<ComparisonRecord>& records);
/// Parses the CSV written by write_records_csv. Throws DataError naming the bad line.
std::vector<ComparisonRecord> read_records_csv(std::istream& in);

struct WorthEstimate {
    std::string model_id;
    double worth = 1.0;
    double log_worth = 0.0;
    double std_error = 0.0;  ///< Fisher-information SE of log_worth; 0 for the reference
    std::string reference_id;
    bool smoothed = false;  ///< pseudo-outcomes were added because the item never won or never lost
};

struct BradleyTerryOptions {
    double tolerance = 1e-8;  ///< on the log-likelihood
    std::int64_t max_iterations = 100000;
    double smoothing = 0.1;  ///< pseudo-outcome weight for items without wins or without losses
};

struct BradleyTerryFit {
    std::vector<WorthEstimate> estimates;  ///< sorted by model id
    std::string reference_id;
    double log_likelihood = 0.0;
    std::int64_t iterations = 0;
    bool converged = false;

    const WorthEstimate& at(const std::string& model_id) const;
    /// P(a beats b) = worth_a / (worth_a + worth_b).
    double probability(const std::string& a, const std::string& b) const;
};

/// Maximum-likelihood worths by minorisation-maximisation, scaled so the reference has worth 1.
/// Throws DataError when the comparison graph is disconnected (listing components) or the
/// reference never appears.
BradleyTerryFit fit_bradley_terry(const std::vector<ComparisonRecord>& records, const std::string& reference,
                                  const BradleyTerryOptions& options = {});

/// Log-likelihood of the records under the given worths.
double bradley_terry_log_likelihood(const std::vector<ComparisonRecord>& records,
                                    const std::map<std::string, double>& worths);

struct WinRate {
    std::string model_id;
    std::int64_t questions = 0;  ///< questions involving the model
    std::int64_t wins = 0;
    std::int64_t ties = 0;
    double percentage = 0.0;  ///< wins / denominator * 100
};

/// Share of the model's questions where a strict majority of readers chose it. Ties are non-wins
/// and are counted separately. `denominator` overrides the question count. Records may be
/// restricted to one group.
WinRate majority_vote_win_rate(const std::vector<ComparisonRecord>& records, const std::string& model_id,
                               std::optional<std::int64_t> denominator = std::nullopt,
                               std::optional<ReaderGroup> group = std::nullopt);

/// Mean over questions of the fraction of the group's readers who differ from the group majority.
/// On a tied question every reader counts as half in disagreement. Throws ConfigError with fewer than
/// two readers.
double within_group_disagreement(const std::vector<ComparisonRecord>& records, ReaderGroup group);

/// Fraction of questions answered by both groups whose majority winners coincide (a tie agrees only
/// with a tie). Throws ConfigError when no question is shared.
double cross_group_agreement(const std::vector<ComparisonRecord>& records, ReaderGroup group_a,
                             ReaderGroup group_b);

/// Readers answering every comparison by sampling from Bradley-Terry with the given worths.
/// `questions` are (item_a, item_b) pairs; each reader answers all of them once.
std::vector<ComparisonRecord> simulate_comparisons(const std::map<std::string, double>& worths,
                                                   const std::vector<std::pair<std::string, std::string>>& questions,
                                                   std::int64_t readers, std::uint64_t seed,
                                                   ReaderGroup group = ReaderGroup::simulated);

/// Table with one row per item ordered by log-worth: rank, model, log-worth +- SE, win %.
struct RankingRow {
    std::int64_t rank = 0;
    std::string model_id;
    double log_worth = 0.0;
    double std_error = 0.0;
    std::optional<WinRate> win_rate;
};

std::vector<RankingRow> ranking_table(const BradleyTerryFit& fit, const std::vector<ComparisonRecord>& records,
                                      std::optional<std::int64_t> win_denominator = std::nullopt);
std::string ranking_table_text(const std::vector<RankingRow>& rows, const std::string& reference_id);
std::string ranking_table_csv(const std::vector<RankingRow>& rows);

}  // namespace stereorecon
