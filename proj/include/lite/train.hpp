#pragma once
// Head-only training: the encoders are frozen (embeddings come from an index
// or are synthetic), and only the scorer head is fitted with AdamW.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lite/error.hpp"
#include "lite/head.hpp"
#include "lite/index.hpp"
#include "lite/losses.hpp"
#include "lite/nn.hpp"
#include "lite/scorers.hpp"

namespace lite {

enum class LossKind { KL, MarginMSE, CrossEntropy, MSE };

inline LossKind parse_loss(const std::string& name) {
    if (name == "kl") return LossKind::KL;
    if (name == "margin-mse") return LossKind::MarginMSE;
    if (name == "xent") return LossKind::CrossEntropy;
    if (name == "mse") return LossKind::MSE;
    throw ContractError("unknown loss '" + name + "' (expected kl, margin-mse, xent or mse)");
}

/// One training group: similarity matrices for N candidates (index 0 is the
/// positive) with teacher scores, or a single matrix with a regression target.
struct TrainExample {
    std::vector<Matrix> sims;
    std::vector<double> teacher;
    double target = 0.0;
};

struct TrainConfig {
    LossKind loss = LossKind::KL;
    AdamWConfig adamw;
    std::size_t steps = 1000;
    std::size_t batch_size = 32;  // >= dataset size means full batch
    std::uint64_t seed = 0;
};

struct TrainResult {
    Head head;
    std::vector<double> losses;  // mean batch loss before each update
};

namespace detail {

inline std::vector<std::span<double>> head_tensors(Head& h) {
    return std::visit(
        [](auto& p) -> std::vector<std::span<double>> {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                throw ContractError("training requires a trainable head (knrm, flat, sep)");
            } else if constexpr (std::is_same_v<T, KnrmParams>) {
                return {std::span<double>(p.w)};
            } else {
                return p.tensors();
            }
        },
        h);
}

inline Head zeros_like(const Head& h) {
    return std::visit(
        [](const auto& p) -> Head {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return std::monostate{};
            } else if constexpr (std::is_same_v<T, KnrmParams>) {
                KnrmParams z = p;
                std::fill(z.w.begin(), z.w.end(), 0.0);
                return z;
            } else if constexpr (std::is_same_v<T, FlatLiteParams>) {
                return FlatLiteParams::zeros(p.l1, p.l2, p.hidden());
            } else {
                return SepLiteParams::zeros(p.dims, p.eps);
            }
        },
        h);
}

inline void add_into(std::span<double> acc, std::span<const double> g) {
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
}

/// Forward pass that keeps whatever backward needs.
struct HeadForward {
    double score = 0.0;
    std::variant<std::monostate, FlatLiteCache, SepLiteCache> cache;
};

inline HeadForward head_forward(const Head& h, const Matrix& s) {
    if (const auto* p = std::get_if<FlatLiteParams>(&h)) {
        auto c = flat_lite_forward(s, *p);
        return {c.score, std::move(c)};
    }
    if (const auto* p = std::get_if<SepLiteParams>(&h)) {
        auto c = sep_lite_forward(s, *p);
        return {c.score, std::move(c)};
    }
    if (const auto* p = std::get_if<KnrmParams>(&h)) return {knrm_score(s, *p), {}};
    throw ContractError("training requires a trainable head (knrm, flat, sep)");
}

inline void head_backward(const Head& h, const Matrix& s, const HeadForward& fwd, double upstream,
                          Head& grads) {
    if (const auto* p = std::get_if<FlatLiteParams>(&h)) {
        auto g = flat_lite_backward(*p, std::get<FlatLiteCache>(fwd.cache), upstream);
        auto dst = std::get<FlatLiteParams>(grads).tensors();
        auto src = std::as_const(g.params).tensors();
        for (std::size_t t = 0; t < dst.size(); ++t) add_into(dst[t], src[t]);
    } else if (const auto* p = std::get_if<SepLiteParams>(&h)) {
        auto g = sep_lite_backward(*p, std::get<SepLiteCache>(fwd.cache), upstream);
        auto dst = std::get<SepLiteParams>(grads).tensors();
        auto src = std::as_const(g.params).tensors();
        for (std::size_t t = 0; t < dst.size(); ++t) add_into(dst[t], src[t]);
    } else if (const auto* p = std::get_if<KnrmParams>(&h)) {
        add_into(std::get<KnrmParams>(grads).w, knrm_weight_grad(s, *p, upstream));
    }
}

inline LossValue example_loss(LossKind kind, const TrainExample& ex,
                              const std::vector<double>& scores) {
    switch (kind) {
        case LossKind::KL: return kl_loss_with_grad(ex.teacher, scores);
        case LossKind::MarginMSE: return margin_mse_with_grad(ex.teacher, scores);
        case LossKind::CrossEntropy: return cross_entropy_with_grad(scores, 0);
        case LossKind::MSE: return squared_error_with_grad(scores.at(0), ex.target);
    }
    throw ContractError("unknown loss kind");
}

inline void validate_example(LossKind kind, const TrainExample& ex, std::size_t index) {
    const auto where = " (example " + std::to_string(index) + ")";
    if (kind == LossKind::MSE) {
        if (ex.sims.size() != 1) throw ContractError("mse loss needs exactly one matrix" + where);
        return;
    }
    if (ex.sims.size() < 2) throw ContractError("ranking losses need >= 2 candidates" + where);
    if ((kind == LossKind::KL || kind == LossKind::MarginMSE) && ex.teacher.size() != ex.sims.size()) {
        throw ContractError("kl/margin-mse need one teacher score per candidate" + where);
    }
}

}  // namespace detail

/// Mean loss and mean gradient over `batch`; gradients are accumulated into `grads`.
inline double batch_loss_and_grad(const Head& head, LossKind loss,
                                  std::span<const TrainExample> data,
                                  std::span<const std::size_t> batch, Head* grads) {
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    std::vector<detail::HeadForward> fwd;
    std::vector<double> scores;
    for (std::size_t idx : batch) {
        const auto& ex = data[idx];
        fwd.clear();
        scores.clear();
        for (const auto& s : ex.sims) {
            fwd.push_back(detail::head_forward(head, s));
            scores.push_back(fwd.back().score);
        }
        const auto lv = detail::example_loss(loss, ex, scores);
        if (!std::isfinite(lv.loss)) {
            std::ostringstream os;
            os << "non-finite loss on example " << idx << "; scores:";
            for (double s : scores) os << " " << s;
            throw Error(os.str());
        }
        total += lv.loss;
        if (grads) {
            for (std::size_t c = 0; c < ex.sims.size(); ++c) {
                if (lv.grad[c] != 0.0)
                    detail::head_backward(head, ex.sims[c], fwd[c], lv.grad[c] * inv, *grads);
            }
        }
    }
    return total * inv;
}

inline TrainResult train_head(std::span<const TrainExample> data, Head initial,
                              const TrainConfig& cfg) {
    if (data.empty()) throw ContractError("train_head: empty training set");
    for (std::size_t i = 0; i < data.size(); ++i) detail::validate_example(cfg.loss, data[i], i);
    TrainResult result{std::move(initial), {}};
    (void)detail::head_tensors(result.head);  // rejects non-trainable heads

    AdamWState opt(cfg.adamw);
    std::mt19937_64 rng(cfg.seed);
    const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= data.size();
    std::vector<std::size_t> batch(full_batch ? data.size() : cfg.batch_size);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    result.losses.reserve(cfg.steps);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        if (full_batch) {
            std::iota(batch.begin(), batch.end(), std::size_t{0});
        } else {
            for (auto& b : batch) b = pick(rng);
        }
        Head grads = detail::zeros_like(result.head);
        const double loss = batch_loss_and_grad(result.head, cfg.loss, data, batch, &grads);
        result.losses.push_back(loss);

        auto params = detail::head_tensors(result.head);
        auto gspans = detail::head_tensors(grads);
        std::vector<std::span<const double>> gconst(gspans.begin(), gspans.end());
        adamw_step(params, gconst, opt);
    }
    return result;
}

/// Mean squared error of the head against every example's target.
inline double regression_mse(const Head& head, std::span<const TrainExample> data) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return batch_loss_and_grad(head, LossKind::MSE, data, all, nullptr);
}

/// Every (X, Y) in {0,1}^{P x L} squared, with identity encoders: S = X^T Y and
/// target tr(X^T Y). Mean squared error over this set is the normalized MSE
/// that the dual-encoder rank bound refers to.
inline std::vector<TrainExample> trace_regression_task(std::size_t p, std::size_t l) {
    if (p * l > 8) throw ContractError("trace_regression_task: P*L must be <= 8");
    const std::uint64_t n = std::uint64_t{1} << (p * l);
    std::vector<TrainExample> out;
    out.reserve(n * n);
    auto point = [&](std::uint64_t idx) {
        Matrix m(p, l);
        for (std::size_t k = 0; k < p * l; ++k) m.data()[k] = static_cast<double>((idx >> k) & 1u);
        return m;
    };
    for (std::uint64_t a = 0; a < n; ++a) {
        const auto x = point(a);
        for (std::uint64_t b = 0; b < n; ++b) {
            const auto y = point(b);
            auto s = similarity_matrix(x, y);
            const double target = trace(s);
            out.push_back({{std::move(s)}, {}, target});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training data file: query_id TAB positive_id TAB neg_id,neg_id,... [TAB teacher,teacher,...]

struct TrainRecord {
    std::uint64_t query_id = 0;
    std::vector<std::uint64_t> doc_ids;  // positive first
    std::vector<double> teacher;
    std::size_t line = 0;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline std::uint64_t parse_id(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw FormatError(where + ": bad id '" + s + "'");
    return v;
}

inline double parse_double(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw FormatError(where + ": bad number '" + s + "'");
    return v;
}

}  // namespace detail

inline std::vector<TrainRecord> parse_train_file(std::istream& in, const std::string& name = "train") {
    std::vector<TrainRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto where = name + ":" + std::to_string(lineno);
        const auto fields = detail::split(line, '\t');
        if (fields.size() < 3 || fields.size() > 4) {
            throw FormatError(where + ": expected 3 or 4 tab-separated fields, got " +
                              std::to_string(fields.size()));
        }
        TrainRecord rec;
        rec.line = lineno;
        rec.query_id = detail::parse_id(fields[0], where);
        rec.doc_ids.push_back(detail::parse_id(fields[1], where));
        for (const auto& n : detail::split(fields[2], ',')) rec.doc_ids.push_back(detail::parse_id(n, where));
        if (fields.size() == 4 && !fields[3].empty()) {
            for (const auto& t : detail::split(fields[3], ',')) rec.teacher.push_back(detail::parse_double(t, where));
            if (rec.teacher.size() != rec.doc_ids.size()) {
                throw FormatError(where + ": " + std::to_string(rec.teacher.size()) +
                                  " teacher scores for " + std::to_string(rec.doc_ids.size()) + " documents");
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<TrainRecord> read_train_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return parse_train_file(in, path.filename().string());
}

/// Resolves records to similarity matrices through the query and document indexes.
inline std::vector<TrainExample> resolve_examples(std::span<const TrainRecord> records,
                                                  const DocumentIndex& queries,
                                                  const DocumentIndex& docs) {
    std::vector<TrainExample> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        const auto where = "line " + std::to_string(rec.line);
        if (!queries.contains(rec.query_id)) {
            throw NotFoundError(where + ": query_id " + std::to_string(rec.query_id) + " not found");
        }
        const auto q = docs.reduce_query(queries.load_doc(rec.query_id));
        TrainExample ex;
        ex.teacher = rec.teacher;
        for (auto id : rec.doc_ids) {
            if (!docs.contains(id)) throw NotFoundError(where + ": doc_id " + std::to_string(id) + " not found");
            ex.sims.push_back(similarity_matrix(q, docs.load_doc(id)));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace lite
