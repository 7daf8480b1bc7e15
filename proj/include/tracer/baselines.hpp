#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tracer/metrics.hpp"
#include "tracer/pair_model.hpp"

namespace tracer {

/// Pre-tokens lowercased, keeping only those with a letter or digit.
std::vector<std::string> baseline_terms(std::string_view text);

using SparseVector = std::map<std::size_t, double>;

/// tf-idf over a document collection with tf = count / length and
/// idf = ln(N / df).
class TfIdfIndex {
 public:
  static TfIdfIndex build(std::span<const std::string> documents);

  std::size_t documents() const noexcept { return doc_vectors_.size(); }
  std::size_t terms() const noexcept { return idf_.size(); }
  /// -1 when the term is not indexed.
  long term_id(const std::string& term) const;
  double idf(std::size_t term) const { return idf_.at(term); }
  const SparseVector& document_vector(std::size_t doc) const { return doc_vectors_.at(doc); }
  /// Weighs a query with the collection idf; unknown terms are dropped.
  SparseVector weigh(std::string_view text) const;
  /// Cosine similarity of the query against every document; all zeros when
  /// the query shares no term with the collection.
  std::vector<double> scores(std::string_view query) const;
  /// Dense terms × documents weight matrix.
  Eigen::MatrixXd dense() const;

 private:
  std::map<std::string, std::size_t> vocab_;
  std::vector<double> idf_;
  std::vector<SparseVector> doc_vectors_;
};

double cosine(const SparseVector& a, const SparseVector& b);

/// Sorts documents by score (ties by id) into a RankedQuery.
RankedQuery rank_documents(const std::string& query_id, std::span<const double> scores,
                           std::span<const std::string> doc_ids, std::set<std::string> relevant);

RankedQuery vsm_rank(const std::string& query_id, std::string_view query, const TfIdfIndex& index,
                     std::span<const std::string> doc_ids, std::set<std::string> relevant);

/// Rank-r truncated SVD of the tf-idf matrix. Documents live in latent space
/// as Σ_r·V_rᵀ columns; queries are folded in as U_rᵀ·q.
class LsiModel {
 public:
  /// Reduces r to the numerical rank (with a warning) when it is larger.
  static LsiModel fit(const TfIdfIndex& index, std::size_t rank);

  std::size_t rank() const noexcept { return static_cast<std::size_t>(singular_values_.size()); }
  bool rank_reduced() const noexcept { return reduced_; }
  const Eigen::VectorXd& singular_values() const noexcept { return singular_values_; }
  Eigen::VectorXd fold_query(std::string_view query, const TfIdfIndex& index) const;
  /// Cosine between the folded query and every document.
  std::vector<double> scores(std::string_view query, const TfIdfIndex& index) const;

 private:
  Eigen::MatrixXd term_basis_;  // terms × r
  Eigen::MatrixXd documents_;   // r × docs
  Eigen::VectorXd singular_values_;
  bool reduced_ = false;
};

RankedQuery lsi_rank(const std::string& query_id, std::string_view query, const LsiModel& model,
                     const TfIdfIndex& index, std::span<const std::string> doc_ids,
                     std::set<std::string> relevant);

struct LdaConfig {
  std::size_t topics = 50;
  double alpha = 1.0;  ///< 50 / topics by default, see defaults()
  double eta = 0.01;
  std::size_t iterations = 500;
  std::size_t inference_iterations = 100;
  std::uint64_t seed = 0;

  static LdaConfig defaults(std::size_t topics = 50);
  /// Throws ConfigError for fewer than two topics or non-positive priors.
  void validate() const;
};

/// Collapsed Gibbs LDA. Scores are 1 − Jensen–Shannon divergence (natural
/// log) between topic distributions.
class LdaModel {
 public:
  static LdaModel fit(std::span<const std::string> documents, const LdaConfig& config);

  std::size_t topics() const noexcept { return config_.topics; }
  const std::vector<std::vector<double>>& document_topics() const noexcept { return theta_; }
  const std::vector<std::vector<double>>& topic_words() const noexcept { return phi_; }
  long term_id(const std::string& term) const;
  /// Held-out Gibbs passes with the topic-word counts frozen. Deterministic
  /// for a given query and config seed.
  std::vector<double> infer(std::string_view text) const;
  std::vector<double> scores(std::string_view query) const;

 private:
  LdaConfig config_;
  std::map<std::string, std::size_t> vocab_;
  std::vector<std::vector<double>> theta_;
  std::vector<std::vector<double>> phi_;
};

double js_divergence(std::span<const double> p, std::span<const double> q);

RankedQuery lda_rank(const std::string& query_id, std::string_view query, const LdaModel& model,
                     std::span<const std::string> doc_ids, std::set<std::string> relevant);

/// PairModel adapters: the index (or topic model) is fitted on the targets.
class VsmPairModel : public PairModel {
 public:
  std::string name() const override { return "vsm"; }
  void prepare(const TextSet& sources, const TextSet& targets) override;
  double score(std::size_t source, std::size_t target) const override;

 private:
  TfIdfIndex index_;
  std::vector<SparseVector> queries_;
};

class LsiPairModel : public PairModel {
 public:
  explicit LsiPairModel(std::size_t rank = 64) : rank_(rank) {}
  std::string name() const override { return "lsi"; }
  void prepare(const TextSet& sources, const TextSet& targets) override;
  double score(std::size_t source, std::size_t target) const override { return scores_(source, target); }

 private:
  std::size_t rank_;
  Eigen::MatrixXd scores_;
};

class LdaPairModel : public PairModel {
 public:
  explicit LdaPairModel(LdaConfig config = LdaConfig::defaults()) : config_(config) {}
  std::string name() const override { return "lda"; }
  void prepare(const TextSet& sources, const TextSet& targets) override;
  double score(std::size_t source, std::size_t target) const override { return scores_(source, target); }

 private:
  LdaConfig config_;
  Eigen::MatrixXd scores_;
};

}  // namespace tracer
