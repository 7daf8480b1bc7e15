#include "tracer/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "tracer/error.hpp"
#include "tracer/hash.hpp"
#include "tracer/rng.hpp"
#include "tracer/tokenizer.hpp"

namespace tracer {

std::vector<std::string> baseline_terms(std::string_view text) {
  std::vector<std::string> out;
  for (auto& tok : pre_tokenize(text)) {
    bool keep = false;
    for (char& c : tok) {
      const auto u = static_cast<unsigned char>(c);
      keep = keep || std::isalnum(u);
      c = static_cast<char>(std::tolower(u));
    }
    if (keep) out.push_back(std::move(tok));
  }
  return out;
}

namespace {

std::map<std::string, std::size_t> term_counts(const std::vector<std::string>& terms) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : terms) ++counts[t];
  return counts;
}

double norm(const SparseVector& v) {
  double s = 0.0;
  for (const auto& [k, x] : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TfIdfIndex TfIdfIndex::build(std::span<const std::string> documents) {
  if (documents.empty()) throw ValidationError("tf-idf index: no documents");
  TfIdfIndex index;
  std::vector<std::map<std::string, std::size_t>> counts;
  std::vector<std::size_t> lengths;
  std::map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    const auto terms = baseline_terms(doc);
    lengths.push_back(terms.size());
    counts.push_back(term_counts(terms));
    for (const auto& [t, c] : counts.back()) ++df[t];
  }
  const double n = static_cast<double>(documents.size());
  for (const auto& [t, f] : df) {
    index.vocab_.emplace(t, index.idf_.size());
    index.idf_.push_back(std::log(n / static_cast<double>(f)));
  }
  for (std::size_t d = 0; d < documents.size(); ++d) {
    SparseVector v;
    for (const auto& [t, c] : counts[d]) {
      const std::size_t id = index.vocab_.at(t);
      const double w = static_cast<double>(c) / static_cast<double>(lengths[d]) * index.idf_[id];
      if (w != 0.0) v.emplace(id, w);
    }
    index.doc_vectors_.push_back(std::move(v));
  }
  return index;
}

long TfIdfIndex::term_id(const std::string& term) const {
  const auto it = vocab_.find(term);
  return it == vocab_.end() ? -1 : static_cast<long>(it->second);
}

SparseVector TfIdfIndex::weigh(std::string_view text) const {
  const auto terms = baseline_terms(text);
  SparseVector v;
  for (const auto& [t, c] : term_counts(terms)) {
    const long id = term_id(t);
    if (id < 0) continue;
    const double w = static_cast<double>(c) / static_cast<double>(terms.size()) * idf_[static_cast<std::size_t>(id)];
    if (w != 0.0) v.emplace(static_cast<std::size_t>(id), w);
  }
  return v;
}

double cosine(const SparseVector& a, const SparseVector& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return dot / (na * nb);
}

std::vector<double> TfIdfIndex::scores(std::string_view query) const {
  const auto q = weigh(query);
  std::vector<double> out;
  out.reserve(doc_vectors_.size());
  for (const auto& d : doc_vectors_) out.push_back(cosine(q, d));
  return out;
}

Eigen::MatrixXd TfIdfIndex::dense() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(terms()),
                                            static_cast<Eigen::Index>(documents()));
  for (std::size_t d = 0; d < doc_vectors_.size(); ++d) {
    for (const auto& [t, w] : doc_vectors_[d]) {
      a(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = w;
    }
  }
  return a;
}

RankedQuery rank_documents(const std::string& query_id, std::span<const double> scores,
                           std::span<const std::string> doc_ids, std::set<std::string> relevant) {
  if (scores.size() != doc_ids.size()) throw ValidationError("rank_documents: score count mismatch");
  std::vector<std::pair<std::string, double>> cands;
  for (std::size_t i = 0; i < scores.size(); ++i) cands.emplace_back(doc_ids[i], scores[i]);
  return RankedQuery(query_id, std::move(cands), std::move(relevant));
}

RankedQuery vsm_rank(const std::string& query_id, std::string_view query, const TfIdfIndex& index,
                     std::span<const std::string> doc_ids, std::set<std::string> relevant) {
  const auto s = index.scores(query);
  return rank_documents(query_id, s, doc_ids, std::move(relevant));
}

LsiModel LsiModel::fit(const TfIdfIndex& index, std::size_t rank) {
  if (rank == 0) throw ConfigError("lsi: rank must be positive");
  const Eigen::MatrixXd a = index.dense();
  if (a.rows() == 0) throw ValidationError("lsi: the collection has no weighted terms");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const double tol = sigma.size() > 0 ? sigma(0) * static_cast<double>(std::max(a.rows(), a.cols())) *
                                            std::numeric_limits<double>::epsilon()
                                      : 0.0;
  std::size_t numeric_rank = 0;
  while (numeric_rank < static_cast<std::size_t>(sigma.size()) &&
         sigma(static_cast<Eigen::Index>(numeric_rank)) > tol) {
    ++numeric_rank;
  }
  if (numeric_rank == 0) throw ValidationError("lsi: the weight matrix is zero");
  LsiModel m;
  if (rank > numeric_rank) {
    spdlog::warn("lsi: rank {} exceeds the matrix rank {}; using {}", rank, numeric_rank, numeric_rank);
    rank = numeric_rank;
    m.reduced_ = true;
  }
  const auto r = static_cast<Eigen::Index>(rank);
  m.singular_values_ = sigma.head(r);
  m.term_basis_ = svd.matrixU().leftCols(r);
  m.documents_ = m.singular_values_.asDiagonal() * svd.matrixV().leftCols(r).transpose();
  return m;
}

Eigen::VectorXd LsiModel::fold_query(std::string_view query, const TfIdfIndex& index) const {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(term_basis_.rows());
  for (const auto& [t, w] : index.weigh(query)) q(static_cast<Eigen::Index>(t)) = w;
  return term_basis_.transpose() * q;
}

std::vector<double> LsiModel::scores(std::string_view query, const TfIdfIndex& index) const {
  const Eigen::VectorXd q = fold_query(query, index);
  const double qn = q.norm();
  std::vector<double> out;
  for (Eigen::Index d = 0; d < documents_.cols(); ++d) {
    const double dn = documents_.col(d).norm();
    out.push_back(qn == 0.0 || dn == 0.0 ? 0.0 : q.dot(documents_.col(d)) / (qn * dn));
  }
  return out;
}

RankedQuery lsi_rank(const std::string& query_id, std::string_view query, const LsiModel& model,
                     const TfIdfIndex& index, std::span<const std::string> doc_ids,
                     std::set<std::string> relevant) {
  const auto s = model.scores(query, index);
  return rank_documents(query_id, s, doc_ids, std::move(relevant));
}

LdaConfig LdaConfig::defaults(std::size_t topics) {
  LdaConfig c;
  c.topics = topics;
  c.alpha = topics > 0 ? 50.0 / static_cast<double>(topics) : 1.0;
  return c;
}

void LdaConfig::validate() const {
  if (topics < 2) throw ConfigError("lda: at least two topics are required");
  if (!(alpha > 0.0) || !(eta > 0.0)) throw ConfigError("lda: priors must be positive");
  if (iterations == 0) throw ConfigError("lda: iterations must be positive");
}

namespace {

std::size_t sample_discrete(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return weights.size() - 1;
}

}  // namespace

LdaModel LdaModel::fit(std::span<const std::string> documents, const LdaConfig& config) {
  config.validate();
  if (documents.empty()) throw ValidationError("lda: no documents");
  LdaModel m;
  m.config_ = config;
  std::vector<std::vector<std::string>> terms;
  for (const auto& d : documents) {
    terms.push_back(baseline_terms(d));
    for (const auto& t : terms.back()) m.vocab_.emplace(t, 0);
  }
  std::size_t next = 0;
  for (auto& [t, id] : m.vocab_) id = next++;
  const std::size_t n_topics = config.topics, n_docs = documents.size(), n_words = m.vocab_.size();
  const double v_eta = static_cast<double>(n_words) * config.eta;

  std::vector<std::vector<std::size_t>> words(n_docs), z(n_docs);
  std::vector<std::vector<double>> n_dt(n_docs, std::vector<double>(n_topics, 0.0));
  std::vector<std::vector<double>> n_tw(n_topics, std::vector<double>(n_words, 0.0));
  std::vector<double> n_t(n_topics, 0.0);
  Rng rng(config.seed);
  for (std::size_t d = 0; d < n_docs; ++d) {
    for (const auto& t : terms[d]) {
      const std::size_t w = m.vocab_.at(t);
      const std::size_t k = rng.index(n_topics);
      words[d].push_back(w);
      z[d].push_back(k);
      n_dt[d][k] += 1;
      n_tw[k][w] += 1;
      n_t[k] += 1;
    }
  }
  std::vector<double> p(n_topics);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (std::size_t d = 0; d < n_docs; ++d) {
      for (std::size_t i = 0; i < words[d].size(); ++i) {
        const std::size_t w = words[d][i];
        std::size_t k = z[d][i];
        n_dt[d][k] -= 1;
        n_tw[k][w] -= 1;
        n_t[k] -= 1;
        for (std::size_t t = 0; t < n_topics; ++t) {
          p[t] = (n_dt[d][t] + config.alpha) * (n_tw[t][w] + config.eta) / (n_t[t] + v_eta);
        }
        k = sample_discrete(p, rng);
        z[d][i] = k;
        n_dt[d][k] += 1;
        n_tw[k][w] += 1;
        n_t[k] += 1;
      }
    }
  }
  const double t_alpha = static_cast<double>(n_topics) * config.alpha;
  for (std::size_t d = 0; d < n_docs; ++d) {
    std::vector<double> theta(n_topics);
    const double len = static_cast<double>(words[d].size());
    for (std::size_t t = 0; t < n_topics; ++t) theta[t] = (n_dt[d][t] + config.alpha) / (len + t_alpha);
    m.theta_.push_back(std::move(theta));
  }
  for (std::size_t t = 0; t < n_topics; ++t) {
    std::vector<double> phi(n_words);
    for (std::size_t w = 0; w < n_words; ++w) phi[w] = (n_tw[t][w] + config.eta) / (n_t[t] + v_eta);
    m.phi_.push_back(std::move(phi));
  }
  return m;
}

long LdaModel::term_id(const std::string& term) const {
  const auto it = vocab_.find(term);
  return it == vocab_.end() ? -1 : static_cast<long>(it->second);
}

std::vector<double> LdaModel::infer(std::string_view text) const {
  const std::size_t n_topics = config_.topics;
  std::vector<std::size_t> words;
  for (const auto& t : baseline_terms(text)) {
    const long id = term_id(t);
    if (id >= 0) words.push_back(static_cast<std::size_t>(id));
  }
  std::vector<double> theta(n_topics, 1.0 / static_cast<double>(n_topics));
  if (words.empty()) return theta;

  Rng rng(mix_seed(config_.seed, fnv1a64(text)));
  std::vector<std::size_t> z(words.size());
  std::vector<double> n_qt(n_topics, 0.0), p(n_topics), sum(n_topics, 0.0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    z[i] = rng.index(n_topics);
    n_qt[z[i]] += 1;
  }
  const std::size_t iters = std::max<std::size_t>(config_.inference_iterations, 2);
  const std::size_t burn_in = iters / 2;
  const double len = static_cast<double>(words.size());
  const double t_alpha = static_cast<double>(n_topics) * config_.alpha;
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      n_qt[z[i]] -= 1;
      for (std::size_t t = 0; t < n_topics; ++t) p[t] = (n_qt[t] + config_.alpha) * phi_[t][words[i]];
      z[i] = sample_discrete(p, rng);
      n_qt[z[i]] += 1;
    }
    if (it >= burn_in) {
      for (std::size_t t = 0; t < n_topics; ++t) sum[t] += (n_qt[t] + config_.alpha) / (len + t_alpha);
    }
  }
  const double kept = static_cast<double>(iters - burn_in);
  for (std::size_t t = 0; t < n_topics; ++t) theta[t] = sum[t] / kept;
  return theta;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ValidationError("js_divergence: length mismatch");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(0.0, js);
}

std::vector<double> LdaModel::scores(std::string_view query) const {
  const auto q = infer(query);
  std::vector<double> out;
  for (const auto& theta : theta_) out.push_back(1.0 - js_divergence(q, theta));
  return out;
}

RankedQuery lda_rank(const std::string& query_id, std::string_view query, const LdaModel& model,
                     std::span<const std::string> doc_ids, std::set<std::string> relevant) {
  const auto s = model.scores(query);
  return rank_documents(query_id, s, doc_ids, std::move(relevant));
}

void VsmPairModel::prepare(const TextSet& sources, const TextSet& targets) {
  index_ = TfIdfIndex::build(targets.texts);
  queries_.clear();
  for (const auto& s : sources.texts) queries_.push_back(index_.weigh(s));
}

double VsmPairModel::score(std::size_t source, std::size_t target) const {
  return cosine(queries_.at(source), index_.document_vector(target));
}

void LsiPairModel::prepare(const TextSet& sources, const TextSet& targets) {
  const auto index = TfIdfIndex::build(targets.texts);
  const auto model = LsiModel::fit(index, rank_);
  scores_.resize(static_cast<Eigen::Index>(sources.size()), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto s = model.scores(sources.texts[i], index);
    for (std::size_t j = 0; j < s.size(); ++j) {
      scores_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s[j];
    }
  }
}

void LdaPairModel::prepare(const TextSet& sources, const TextSet& targets) {
  const auto model = LdaModel::fit(targets.texts, config_);
  scores_.resize(static_cast<Eigen::Index>(sources.size()), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto s = model.scores(sources.texts[i]);
    for (std::size_t j = 0; j < s.size(); ++j) {
      scores_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s[j];
    }
  }
}

}  // namespace tracer
