#include "volforge/rnn.hpp"

#include "volforge/csv.hpp"
#include "volforge/errors.hpp"
#include "volforge/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace volforge {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// names

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view name, const std::array<std::pair<std::string_view, E>, N>& table, const char* what) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& [key, value] : table)
        if (key == lower) return value;
    std::string options;
    for (const auto& [key, value] : table) options += (options.empty() ? "" : ", ") + std::string(key);
    throw ConfigError(std::string("unknown ") + what + " '" + std::string(name) + "' (expected " + options + ")");
}

constexpr std::array<std::pair<std::string_view, CellType>, 2> cell_names{{{"lstm", CellType::lstm},
                                                                           {"gru", CellType::gru}}};
constexpr std::array<std::pair<std::string_view, HeadActivation>, 4> head_names{{{"linear", HeadActivation::linear},
                                                                                 {"relu", HeadActivation::relu},
                                                                                 {"softmax", HeadActivation::softmax},
                                                                                 {"tanh", HeadActivation::tanh}}};
constexpr std::array<std::pair<std::string_view, LossKind>, 3> loss_names{
    {{"mse", LossKind::mse}, {"mae", LossKind::mae}, {"huber", LossKind::huber}}};
constexpr std::array<std::pair<std::string_view, OptimizerKind>, 3> optimizer_names{
    {{"sgd", OptimizerKind::sgd}, {"rmsprop", OptimizerKind::rmsprop}, {"adam", OptimizerKind::adam}}};

template <class E, std::size_t N>
std::string_view name_of(E value, const std::array<std::pair<std::string_view, E>, N>& table) {
    for (const auto& [key, v] : table)
        if (v == value) return key;
    return "?";
}

}  // namespace

CellType parse_cell(std::string_view name) { return parse_enum(name, cell_names, "cell"); }
HeadActivation parse_head(std::string_view name) { return parse_enum(name, head_names, "activation"); }
LossKind parse_loss(std::string_view name) { return parse_enum(name, loss_names, "loss"); }
OptimizerKind parse_optimizer(std::string_view name) { return parse_enum(name, optimizer_names, "optimizer"); }
std::string_view to_string(CellType v) { return name_of(v, cell_names); }
std::string_view to_string(HeadActivation v) { return name_of(v, head_names); }
std::string_view to_string(LossKind v) { return name_of(v, loss_names); }
std::string_view to_string(OptimizerKind v) { return name_of(v, optimizer_names); }

void RnnConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("rnn config: " + msg); };
    if (window < 1 || window > 50) fail("window must lie in 1..50, got " + std::to_string(window));
    if (layers < 1 || layers > 5) fail("layers must lie in 1..5, got " + std::to_string(layers));
    constexpr std::array<std::size_t, 7> unit_grid{5, 10, 20, 30, 50, 100, 200};
    if (std::find(unit_grid.begin(), unit_grid.end(), units) == unit_grid.end())
        fail("units must be one of 5,10,20,30,50,100,200, got " + std::to_string(units));
    constexpr std::array<double, 6> dropout_grid{0.0, 0.01, 0.05, 0.1, 0.2, 0.3};
    if (std::find(dropout_grid.begin(), dropout_grid.end(), dropout) == dropout_grid.end())
        fail("dropout must be 0 or one of 0.01,0.05,0.1,0.2,0.3, got " + format_real(dropout));
    if (batch_size < 1 || batch_size > 128) fail("batch size must lie in 1..128, got " + std::to_string(batch_size));
    if (epochs < 1) fail("epochs must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning rate must be finite and >= 0");
}

std::string RnnConfig::describe() const {
    std::ostringstream out;
    out << to_string(cell) << " window=" << window << " layers=" << layers << " units=" << units
        << " dropout=" << format_real(dropout) << " head=" << to_string(head) << " loss=" << to_string(loss)
        << " epochs=" << epochs << " batch=" << batch_size << " optimizer=" << to_string(optimizer)
        << " lr=" << format_real(learning_rate) << " seed=" << seed;
    if (cell == CellType::gru && gru_bias) out << " gru_bias=true";
    return out.str();
}

// ---------------------------------------------------------------------------
// weights

RnnWeights::RnnWeights(CellType cell, std::size_t layers, std::size_t units, bool bias)
    : cell_(cell), layers_(layers), units_(units), bias_(cell == CellType::lstm ? true : bias) {
    if (layers == 0 || units == 0) throw std::invalid_argument("rnn weights need at least one layer and unit");
    data_.assign(head_offset() + units_ + 1, 0.0);
}

std::size_t RnnWeights::layer_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) {
        const std::size_t rows = gates() * units_;
        off += rows * (units_ + input_size(l)) + (bias_ ? rows : 0);
    }
    return off;
}

std::size_t RnnWeights::bias_offset(std::size_t layer) const {
    return layer_offset(layer) + gates() * units_ * (units_ + input_size(layer));
}

std::size_t RnnWeights::head_offset() const { return layer_offset(layers_); }

Eigen::Map<MatrixXd> RnnWeights::stacked(std::size_t layer) {
    if (layer >= layers_) throw std::out_of_range("rnn layer index");
    return {data_.data() + layer_offset(layer), static_cast<Eigen::Index>(gates() * units_),
            static_cast<Eigen::Index>(units_ + input_size(layer))};
}

Eigen::Map<const MatrixXd> RnnWeights::stacked(std::size_t layer) const {
    if (layer >= layers_) throw std::out_of_range("rnn layer index");
    return {data_.data() + layer_offset(layer), static_cast<Eigen::Index>(gates() * units_),
            static_cast<Eigen::Index>(units_ + input_size(layer))};
}

Eigen::Map<VectorXd> RnnWeights::stacked_bias(std::size_t layer) {
    if (!bias_) throw std::logic_error("these gates have no bias");
    return {data_.data() + bias_offset(layer), static_cast<Eigen::Index>(gates() * units_)};
}

Eigen::Map<const VectorXd> RnnWeights::stacked_bias(std::size_t layer) const {
    if (!bias_) throw std::logic_error("these gates have no bias");
    return {data_.data() + bias_offset(layer), static_cast<Eigen::Index>(gates() * units_)};
}

MatrixXd RnnWeights::gate_matrix(std::size_t layer, std::size_t gate) const {
    if (gate >= gates()) throw std::out_of_range("rnn gate index");
    const auto h = static_cast<Eigen::Index>(units_);
    return stacked(layer).middleRows(static_cast<Eigen::Index>(gate) * h, h);
}

Eigen::Map<VectorXd> RnnWeights::head_weights() {
    return {data_.data() + head_offset(), static_cast<Eigen::Index>(units_)};
}

Eigen::Map<const VectorXd> RnnWeights::head_weights() const {
    return {data_.data() + head_offset(), static_cast<Eigen::Index>(units_)};
}

RnnWeights RnnWeights::initialize(const RnnConfig& config, Rng& rng) {
    RnnWeights w(config.cell, config.layers, config.units, config.gru_bias);
    for (std::size_t l = 0; l < w.layers_; ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(w.units_ + w.input_size(l)));
        auto m = w.stacked(l);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
        if (w.bias_) {
            auto b = w.stacked_bias(l);
            for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-bound, bound);
            if (w.cell_ == CellType::lstm) b.head(static_cast<Eigen::Index>(w.units_)).setOnes();
        }
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.units_));
    auto head = w.head_weights();
    for (Eigen::Index i = 0; i < head.size(); ++i) head(i) = rng.uniform(-bound, bound);
    w.head_bias() = rng.uniform(-bound, bound);
    return w;
}

namespace {

std::string_view gate_name(CellType cell, std::size_t gate) {
    static constexpr std::array<std::string_view, 4> lstm{"f", "i", "C", "o"};
    static constexpr std::array<std::string_view, 3> gru{"z", "r", "h"};
    return cell == CellType::lstm ? lstm[gate] : gru[gate];
}

}  // namespace

std::string RnnWeights::parameter_name(std::size_t index) const {
    if (index >= data_.size()) throw std::out_of_range("rnn parameter index");
    const std::size_t h = units_;
    for (std::size_t l = 0; l < layers_; ++l) {
        const std::size_t rows = gates() * h;
        const std::size_t w0 = layer_offset(l), b0 = bias_offset(l);
        if (index >= w0 && index < b0) {
            const std::size_t k = index - w0, row = k % rows, col = k / rows;
            return "layer" + std::to_string(l) + ".W_" + std::string(gate_name(cell_, row / h)) + "[" +
                   std::to_string(row % h) + "," + std::to_string(col) + "]";
        }
        if (bias_ && index >= b0 && index < b0 + rows) {
            const std::size_t row = index - b0;
            return "layer" + std::to_string(l) + ".b_" + std::string(gate_name(cell_, row / h)) + "[" +
                   std::to_string(row % h) + "]";
        }
    }
    if (index == data_.size() - 1) return "head.b";
    return "head.w[" + std::to_string(index - head_offset()) + "]";
}

std::string RnnWeights::dump() const {
    std::ostringstream out;
    out << "volforge-rnn-weights 1\ncell " << to_string(cell_) << "\nlayers " << layers_ << "\nunits " << units_
        << "\nbias " << (bias_ ? 1 : 0) << '\n';
    auto tensor = [&](const std::string& name, std::size_t offset, std::size_t rows, std::size_t cols) {
        out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
        for (std::size_t k = 0; k < rows * cols; ++k) out << (k ? " " : "") << format_real(data_[offset + k]);
        out << '\n';
    };
    for (std::size_t l = 0; l < layers_; ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        tensor(prefix + ".W", layer_offset(l), gates() * units_, units_ + input_size(l));
        if (bias_) tensor(prefix + ".b", bias_offset(l), gates() * units_, 1);
    }
    tensor("head.w", head_offset(), units_, 1);
    tensor("head.b", data_.size() - 1, 1, 1);
    return out.str();
}

RnnWeights RnnWeights::parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    auto bad = [](const std::string& why) { throw std::invalid_argument("rnn weight dump: " + why); };
    std::string magic, key, cell_name;
    int version = 0;
    std::size_t layers = 0, units = 0;
    int bias = 0;
    if (!(in >> magic >> version) || magic != "volforge-rnn-weights" || version != 1) bad("unsupported header");
    if (!(in >> key >> cell_name) || key != "cell") bad("missing cell");
    if (!(in >> key >> layers) || key != "layers") bad("missing layers");
    if (!(in >> key >> units) || key != "units") bad("missing units");
    if (!(in >> key >> bias) || key != "bias") bad("missing bias");
    RnnWeights w(parse_cell(cell_name), layers, units, bias != 0);
    std::size_t k = 0;
    while (in >> key) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (key != "tensor" || !(in >> name >> rows >> cols)) bad("malformed tensor header");
        for (std::size_t i = 0; i < rows * cols; ++i) {
            std::string token;
            if (!(in >> token)) bad("truncated tensor " + name);
            const auto v = parse_real(token);
            if (!v) bad("bad value in " + name);
            if (k >= w.data_.size()) bad("too many values");
            w.data_[k++] = *v;
        }
    }
    if (k != w.data_.size()) bad("expected " + std::to_string(w.data_.size()) + " values, read " + std::to_string(k));
    return w;
}

// ---------------------------------------------------------------------------
// single steps

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

MatrixXd sigmoid(const MatrixXd& a) { return a.unaryExpr([](double x) { return sigmoid(x); }); }
MatrixXd tanh_of(const MatrixXd& a) { return a.array().tanh().matrix(); }

void check_step_shapes(const VectorXd& x, const VectorXd& h_prev, const RnnWeights& w, std::size_t layer) {
    if (layer >= w.layers()) throw std::invalid_argument("rnn cell: layer index out of range");
    if (static_cast<std::size_t>(x.size()) != w.input_size(layer))
        throw std::invalid_argument("rnn cell: input has size " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(w.input_size(layer)));
    if (static_cast<std::size_t>(h_prev.size()) != w.units())
        throw std::invalid_argument("rnn cell: hidden state has size " + std::to_string(h_prev.size()) +
                                    ", expected " + std::to_string(w.units()));
}

}  // namespace

LstmState lstm_cell(const VectorXd& x, const VectorXd& h_prev, const VectorXd& c_prev, const RnnWeights& weights,
                    std::size_t layer) {
    if (weights.cell() != CellType::lstm) throw std::invalid_argument("lstm_cell: weights are not LSTM");
    check_step_shapes(x, h_prev, weights, layer);
    if (c_prev.size() != h_prev.size()) throw std::invalid_argument("lstm_cell: cell state size mismatch");
    const auto h = static_cast<Eigen::Index>(weights.units());
    VectorXd z(h + x.size());
    z << h_prev, x;
    const VectorXd a = weights.stacked(layer) * z + weights.stacked_bias(layer);
    const VectorXd f = sigmoid(a.segment(0, h));
    const VectorXd i = sigmoid(a.segment(h, h));
    const VectorXd g = tanh_of(a.segment(2 * h, h));
    const VectorXd o = sigmoid(a.segment(3 * h, h));
    LstmState s;
    s.c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    s.h = o.cwiseProduct(tanh_of(s.c));
    return s;
}

VectorXd gru_cell(const VectorXd& x, const VectorXd& h_prev, const RnnWeights& weights, std::size_t layer) {
    if (weights.cell() != CellType::gru) throw std::invalid_argument("gru_cell: weights are not GRU");
    check_step_shapes(x, h_prev, weights, layer);
    const auto h = static_cast<Eigen::Index>(weights.units());
    const auto w = weights.stacked(layer);
    VectorXd zin(h + x.size());
    zin << h_prev, x;
    VectorXd a = w.topRows(2 * h) * zin;
    if (weights.has_bias()) a += weights.stacked_bias(layer).head(2 * h);
    const VectorXd z = sigmoid(a.head(h));
    const VectorXd r = sigmoid(a.tail(h));
    VectorXd rin(h + x.size());
    rin << r.cwiseProduct(h_prev), x;
    VectorXd ac = w.bottomRows(h) * rin;
    if (weights.has_bias()) ac += weights.stacked_bias(layer).tail(h);
    const VectorXd cand = tanh_of(ac);
    return (VectorXd::Ones(h) - z).cwiseProduct(h_prev) + z.cwiseProduct(cand);
}

// ---------------------------------------------------------------------------
// batched unroll and BPTT

namespace {

// Time step t of a layer occupies columns [t * B, (t + 1) * B) of every matrix.
struct LayerCache {
    MatrixXd x;       // layer input (after dropout), in x TB
    MatrixXd gates;   // activated gates, G*H x TB
    MatrixXd h;       // hidden states, H x TB
    MatrixXd c;       // LSTM cell states
    MatrixXd tanh_c;
    MatrixXd rh;      // GRU: r_t * h_{t-1}
    MatrixXd mask;    // dropout mask on the input (layers > 0)
};

struct Pass {
    std::size_t steps = 0;
    Eigen::Index batch = 0;
    std::vector<LayerCache> layers;
    MatrixXd head_mask;      // on the final hidden state
    Eigen::RowVectorXd pre;  // head pre-activation
    Eigen::RowVectorXd out;
};

MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
    if (rng == nullptr || p <= 0.0) return MatrixXd::Ones(rows, cols);
    MatrixXd m(rows, cols);
    const double keep = 1.0 / (1.0 - p);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng->uniform() < p ? 0.0 : keep;
    return m;
}

double head_activation(HeadActivation act, double a) {
    switch (act) {
        case HeadActivation::linear: return a;
        case HeadActivation::relu: return a > 0.0 ? a : 0.0;
        case HeadActivation::softmax: return 1.0;  // softmax over a single unit
        case HeadActivation::tanh: return std::tanh(a);
    }
    return a;
}

double head_derivative(HeadActivation act, double a) {
    switch (act) {
        case HeadActivation::linear: return 1.0;
        case HeadActivation::relu: return a > 0.0 ? 1.0 : 0.0;
        case HeadActivation::softmax: return 0.0;
        case HeadActivation::tanh: {
            const double t = std::tanh(a);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

/// x: window x batch, scaled inputs.
Pass forward(const RnnWeights& w, HeadActivation head, const MatrixXd& x, double dropout, Rng* rng) {
    const auto T = static_cast<Eigen::Index>(x.rows());
    const Eigen::Index B = x.cols();
    const auto H = static_cast<Eigen::Index>(w.units());
    const bool lstm = w.cell() == CellType::lstm;
    Pass pass;
    pass.steps = static_cast<std::size_t>(T);
    pass.batch = B;
    pass.layers.resize(w.layers());
    for (std::size_t l = 0; l < w.layers(); ++l) {
        LayerCache& cache = pass.layers[l];
        const auto W = w.stacked(l);
        const auto Wh = W.leftCols(H);
        const auto in = static_cast<Eigen::Index>(w.input_size(l));
        if (l == 0) {
            cache.x.resize(1, T * B);
            for (Eigen::Index t = 0; t < T; ++t) cache.x.middleCols(t * B, B) = x.row(t);
        } else {
            cache.mask = dropout_mask(in, T * B, dropout, rng);
            cache.x = pass.layers[l - 1].h.cwiseProduct(cache.mask);
        }
        MatrixXd a = W.rightCols(in) * cache.x;
        if (w.has_bias()) a.colwise() += w.stacked_bias(l);
        cache.h.resize(H, T * B);
        if (lstm) {
            cache.c.resize(H, T * B);
            cache.tanh_c.resize(H, T * B);
            for (Eigen::Index t = 0; t < T; ++t) {
                auto at = a.middleCols(t * B, B);
                if (t > 0) at.noalias() += Wh * cache.h.middleCols((t - 1) * B, B);
                at.topRows(2 * H) = at.topRows(2 * H).unaryExpr([](double v) { return sigmoid(v); });
                at.middleRows(2 * H, H) = at.middleRows(2 * H, H).array().tanh();
                at.bottomRows(H) = at.bottomRows(H).unaryExpr([](double v) { return sigmoid(v); });
                auto c = cache.c.middleCols(t * B, B);
                c = at.middleRows(H, H).cwiseProduct(at.middleRows(2 * H, H));
                if (t > 0) c += at.topRows(H).cwiseProduct(cache.c.middleCols((t - 1) * B, B));
                cache.tanh_c.middleCols(t * B, B) = c.array().tanh();
                cache.h.middleCols(t * B, B) = at.bottomRows(H).cwiseProduct(cache.tanh_c.middleCols(t * B, B));
            }
        } else {
            cache.rh.resize(H, T * B);
            for (Eigen::Index t = 0; t < T; ++t) {
                auto at = a.middleCols(t * B, B);
                auto zr = at.topRows(2 * H);
                if (t > 0) zr.noalias() += Wh.topRows(2 * H) * cache.h.middleCols((t - 1) * B, B);
                zr = zr.unaryExpr([](double v) { return sigmoid(v); });
                auto rh = cache.rh.middleCols(t * B, B);
                auto cand = at.bottomRows(H);
                if (t > 0) {
                    rh = at.middleRows(H, H).cwiseProduct(cache.h.middleCols((t - 1) * B, B));
                    cand.noalias() += Wh.bottomRows(H) * rh;
                } else {
                    rh.setZero();
                }
                cand = cand.array().tanh();
                auto h = cache.h.middleCols(t * B, B);
                h = at.topRows(H).cwiseProduct(cand);
                if (t > 0)
                    h += (1.0 - at.topRows(H).array()).matrix().cwiseProduct(cache.h.middleCols((t - 1) * B, B));
            }
        }
        cache.gates = std::move(a);
    }
    pass.head_mask = dropout_mask(H, B, dropout, rng);
    const MatrixXd top = pass.layers.back().h.rightCols(B).cwiseProduct(pass.head_mask);
    pass.pre = w.head_weights().transpose() * top;
    pass.pre.array() += w.head_bias();
    pass.out = pass.pre.unaryExpr([head](double v) { return head_activation(head, v); });
    return pass;
}

double loss_value(LossKind loss, double e) {
    switch (loss) {
        case LossKind::mse: return e * e;
        case LossKind::mae: return std::abs(e);
        case LossKind::huber: return std::abs(e) <= 1.0 ? 0.5 * e * e : std::abs(e) - 0.5;
    }
    return e * e;
}

double loss_derivative(LossKind loss, double e) {
    switch (loss) {
        case LossKind::mse: return 2.0 * e;
        case LossKind::mae: return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
        case LossKind::huber: return std::abs(e) <= 1.0 ? e : (e > 0.0 ? 1.0 : -1.0);
    }
    return 2.0 * e;
}

/// Fills `grad` (weight layout) from the cached pass.
void backward(const RnnWeights& w, const RnnConfig& config, const Pass& pass, const Eigen::RowVectorXd& d_out,
              std::vector<double>& grad) {
    RnnWeights g(w.cell(), w.layers(), w.units(), w.has_bias());
    const Eigen::Index B = pass.batch;
    const auto T = static_cast<Eigen::Index>(pass.steps);
    const auto H = static_cast<Eigen::Index>(w.units());
    const bool lstm = w.cell() == CellType::lstm;

    Eigen::RowVectorXd d_pre(B);
    for (Eigen::Index b = 0; b < B; ++b) d_pre(b) = d_out(b) * head_derivative(config.head, pass.pre(b));
    const MatrixXd top = pass.layers.back().h.rightCols(B).cwiseProduct(pass.head_mask);
    g.head_weights() = top * d_pre.transpose();
    g.head_bias() = d_pre.sum();

    // gradient flowing into each layer's hidden states from above
    MatrixXd d_above = MatrixXd::Zero(H, T * B);
    d_above.rightCols(B) = (w.head_weights() * d_pre).cwiseProduct(pass.head_mask);

    for (std::size_t l = w.layers(); l-- > 0;) {
        const LayerCache& cache = pass.layers[l];
        const auto W = w.stacked(l);
        const auto Wh = W.leftCols(H);
        auto dW = g.stacked(l);
        const auto in = static_cast<Eigen::Index>(w.input_size(l));
        const auto G = static_cast<Eigen::Index>(w.gates());
        MatrixXd dA(G * H, T * B);
        MatrixXd dh_next = MatrixXd::Zero(H, B);
        MatrixXd dc_next = MatrixXd::Zero(H, B);
        MatrixXd dh(H, B);
        for (Eigen::Index t = T; t-- > 0;) {
            dh = d_above.middleCols(t * B, B) + dh_next;
            const auto gt = cache.gates.middleCols(t * B, B);
            auto da = dA.middleCols(t * B, B);
            if (lstm) {
                const auto f = gt.topRows(H).array();
                const auto i = gt.middleRows(H, H).array();
                const auto cc = gt.middleRows(2 * H, H).array();
                const auto o = gt.bottomRows(H).array();
                const auto tc = cache.tanh_c.middleCols(t * B, B).array();
                const MatrixXd dc = (dh.array() * o * (1.0 - tc.square())).matrix() + dc_next;
                if (t > 0)
                    da.topRows(H) = dc.array() * cache.c.middleCols((t - 1) * B, B).array() * f * (1.0 - f);
                else
                    da.topRows(H).setZero();
                da.middleRows(H, H) = dc.array() * cc * i * (1.0 - i);
                da.middleRows(2 * H, H) = dc.array() * i * (1.0 - cc.square());
                da.bottomRows(H) = dh.array() * tc * o * (1.0 - o);
                dc_next = dc.cwiseProduct(gt.topRows(H));
                if (t > 0) dh_next.noalias() = Wh.transpose() * da;
            } else {
                const auto z = gt.topRows(H).array();
                const auto r = gt.middleRows(H, H).array();
                const auto cand = gt.bottomRows(H).array();
                da.bottomRows(H) = dh.array() * z * (1.0 - cand.square());
                if (t > 0) {
                    const auto h_prev = cache.h.middleCols((t - 1) * B, B).array();
                    const MatrixXd d_rh = Wh.bottomRows(H).transpose() * da.bottomRows(H);
                    da.topRows(H) = dh.array() * (cand - h_prev) * z * (1.0 - z);
                    da.middleRows(H, H) = d_rh.array() * h_prev * r * (1.0 - r);
                    dh_next = (dh.array() * (1.0 - z) + d_rh.array() * r).matrix();
                    dh_next.noalias() += Wh.topRows(2 * H).transpose() * da.topRows(2 * H);
                } else {
                    da.topRows(H) = dh.array() * cand * z * (1.0 - z);
                    da.middleRows(H, H).setZero();
                }
            }
        }
        // weight gradients in one product over all steps
        const Eigen::Index later = (T - 1) * B;
        dW.rightCols(in).noalias() = dA * cache.x.transpose();
        if (later > 0) {
            if (lstm) {
                dW.leftCols(H).noalias() = dA.rightCols(later) * cache.h.leftCols(later).transpose();
            } else {
                dW.topLeftCorner(2 * H, H).noalias() =
                    dA.topRows(2 * H).rightCols(later) * cache.h.leftCols(later).transpose();
                dW.bottomLeftCorner(H, H).noalias() =
                    dA.bottomRows(H).rightCols(later) * cache.rh.rightCols(later).transpose();
            }
        }
        if (w.has_bias()) g.stacked_bias(l) = dA.rowwise().sum();
        if (l > 0) d_above = (W.rightCols(in).transpose() * dA).cwiseProduct(cache.mask);
    }
    grad = std::move(g.data());
}

/// Mean loss over the batch; gradient of that mean when requested.
double batch_pass(const RnnWeights& w, const RnnConfig& config, const MatrixXd& x, const Eigen::RowVectorXd& y,
                  Rng* rng, std::vector<double>* grad) {
    const Pass pass = forward(w, config.head, x, rng ? config.dropout : 0.0, rng);
    const auto B = static_cast<double>(y.size());
    double total = 0.0;
    Eigen::RowVectorXd d_out(y.size());
    for (Eigen::Index b = 0; b < y.size(); ++b) {
        const double e = pass.out(b) - y(b);
        total += loss_value(config.loss, e);
        d_out(b) = loss_derivative(config.loss, e) / B;
    }
    if (grad) backward(w, config, pass, d_out, *grad);
    return total / B;
}

MatrixXd to_matrix(const std::vector<std::vector<double>>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("rnn batch: no samples");
    const std::size_t T = inputs.front().size();
    MatrixXd x(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        if (inputs[b].size() != T) throw std::invalid_argument("rnn batch: ragged windows");
        for (std::size_t t = 0; t < T; ++t)
            x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(b)) = inputs[b][t];
    }
    return x;
}

void check_config_matches(const RnnWeights& w, const RnnConfig& config) {
    if (w.cell() != config.cell || w.layers() != config.layers || w.units() != config.units)
        throw std::invalid_argument("rnn: weights do not match the configuration");
}

}  // namespace

double rnn_forward(std::span<const double> window, const RnnWeights& weights, HeadActivation head,
                   std::size_t expected_window) {
    if (window.size() != expected_window)
        throw std::invalid_argument("rnn_forward: window has " + std::to_string(window.size()) +
                                    " values, expected " + std::to_string(expected_window));
    if (window.empty()) throw std::invalid_argument("rnn_forward: empty window");
    MatrixXd x(static_cast<Eigen::Index>(window.size()), 1);
    for (std::size_t t = 0; t < window.size(); ++t) x(static_cast<Eigen::Index>(t), 0) = window[t];
    return forward(weights, head, x, 0.0, nullptr).out(0);
}

double rnn_batch_loss(const RnnWeights& weights, const RnnConfig& config,
                      const std::vector<std::vector<double>>& inputs, std::span<const double> targets,
                      std::vector<double>* gradient) {
    check_config_matches(weights, config);
    if (targets.size() != inputs.size()) throw std::invalid_argument("rnn batch: target count mismatch");
    const MatrixXd x = to_matrix(inputs);
    Eigen::RowVectorXd y(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t b = 0; b < targets.size(); ++b) y(static_cast<Eigen::Index>(b)) = targets[b];
    return batch_pass(weights, config, x, y, nullptr, gradient);
}

GradientCheck rnn_gradient_check(const RnnConfig& config, const RnnWeights& weights,
                                 const std::vector<std::vector<double>>& inputs, std::span<const double> targets,
                                 double step) {
    std::vector<double> analytic;
    rnn_batch_loss(weights, config, inputs, targets, &analytic);
    RnnWeights probe = weights;
    GradientCheck result;
    result.parameters = analytic.size();
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const double saved = probe.data()[k];
        probe.data()[k] = saved + step;
        const double up = rnn_batch_loss(probe, config, inputs, targets);
        probe.data()[k] = saved - step;
        const double down = rnn_batch_loss(probe, config, inputs, targets);
        probe.data()[k] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-5});
        const double rel = std::abs(analytic[k] - numeric) / denom;
        if (rel > result.max_relative_error || result.worst_parameter.empty()) {
            result.max_relative_error = rel;
            result.worst_parameter = weights.parameter_name(k);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// training

double TrainedRnn::predict(std::span<const double> history) const {
    if (history.size() < config.window)
        throw std::invalid_argument("rnn predict: history shorter than the window (" + std::to_string(config.window) +
                                    ")");
    const auto tail = history.last(config.window);
    std::vector<double> scaled(tail.size());
    for (std::size_t i = 0; i < tail.size(); ++i) scaled[i] = scaler.transform(tail[i]);
    return scaler.invert(rnn_forward(scaled, weights, config.head, config.window));
}

TrainedRnn rnn_train(std::span<const double> train, const RnnConfig& config) {
    config.validate();
    const std::size_t n = train.size();
    if (n <= config.window + 10)
        throw std::invalid_argument("rnn_train: " + std::to_string(n) + " training points, need more than window + 10 = " +
                                    std::to_string(config.window + 10));
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(train[i])) throw std::invalid_argument("rnn_train: non-finite value at " + std::to_string(i));

    TrainedRnn model;
    model.config = config;
    const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
    if (*lo == *hi) {
        model.scaler = MinMaxScaler::from_bounds(*lo, *lo + 1.0);
        model.warnings.push_back("constant training series; scaling uses [v, v + 1]");
    } else {
        model.scaler = MinMaxScaler::fit(train);
    }
    if (config.head == HeadActivation::softmax)
        model.warnings.push_back("softmax head on a single output unit always predicts 1.0 (scaled)");

    const std::vector<double> s = model.scaler.transform(train);
    const std::size_t samples = n - config.window;
    const auto W = static_cast<Eigen::Index>(config.window);
    MatrixXd all_x(W, static_cast<Eigen::Index>(samples));
    Eigen::RowVectorXd all_y(static_cast<Eigen::Index>(samples));
    for (std::size_t j = 0; j < samples; ++j) {
        for (std::size_t t = 0; t < config.window; ++t)
            all_x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = s[j + t];
        all_y(static_cast<Eigen::Index>(j)) = s[j + config.window];
    }

    Rng rng(config.seed);
    model.weights = RnnWeights::initialize(config, rng);
    std::vector<double>& theta = model.weights.data();
    const std::size_t P = theta.size();
    std::vector<double> m(P, 0.0), v(P, 0.0), grad;
    std::vector<std::size_t> order(samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;
    constexpr double clip = 5.0, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, rho = 0.9;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = samples; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < samples; start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, samples - start);
            MatrixXd x(W, static_cast<Eigen::Index>(count));
            Eigen::RowVectorXd y(static_cast<Eigen::Index>(count));
            for (std::size_t b = 0; b < count; ++b) {
                x.col(static_cast<Eigen::Index>(b)) = all_x.col(static_cast<Eigen::Index>(order[start + b]));
                y(static_cast<Eigen::Index>(b)) = all_y(static_cast<Eigen::Index>(order[start + b]));
            }
            const double loss = batch_pass(model.weights, config, x, y, &rng, &grad);
            if (!std::isfinite(loss))
                throw std::runtime_error("rnn_train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                         ", batch " + std::to_string(batches + 1));
            epoch_loss += loss;
            ++batches;

            double norm2 = 0.0;
            for (double gk : grad) norm2 += gk * gk;
            const double norm = std::sqrt(norm2);
            if (!std::isfinite(norm))
                throw std::runtime_error("rnn_train: non-finite gradient at epoch " + std::to_string(epoch + 1) +
                                         ", batch " + std::to_string(batches));
            const double scale = norm > clip ? clip / norm : 1.0;
            ++step;
            const double lr = config.learning_rate;
            switch (config.optimizer) {
                case OptimizerKind::sgd:
                    for (std::size_t k = 0; k < P; ++k) theta[k] -= lr * scale * grad[k];
                    break;
                case OptimizerKind::rmsprop:
                    for (std::size_t k = 0; k < P; ++k) {
                        const double gk = scale * grad[k];
                        v[k] = rho * v[k] + (1.0 - rho) * gk * gk;
                        theta[k] -= lr * gk / (std::sqrt(v[k]) + eps);
                    }
                    break;
                case OptimizerKind::adam: {
                    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
                    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
                    for (std::size_t k = 0; k < P; ++k) {
                        const double gk = scale * grad[k];
                        m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                        theta[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
                    }
                    break;
                }
            }
        }
        model.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
    }
    return model;
}

std::vector<double> rnn_rolling_forecast(const TrainedRnn& model, std::span<const double> series,
                                         std::size_t train_len) {
    if (train_len > series.size()) throw std::invalid_argument("rnn_rolling_forecast: train_len beyond series");
    std::vector<double> out;
    out.reserve(series.size() - train_len);
    for (std::size_t t = train_len; t < series.size(); ++t) out.push_back(model.predict(series.first(t)));
    return out;
}

// ---------------------------------------------------------------------------
// searches

namespace {

double validation_metric(const TrainedRnn& model, std::span<const double> series, std::size_t train_len,
                         Metric metric) {
    const auto predicted = rnn_rolling_forecast(model, series, train_len);
    return metric_value(metric, series.subspan(train_len), predicted);
}

}  // namespace

std::vector<std::size_t> default_window_grid() {
    std::vector<std::size_t> grid(50);
    std::iota(grid.begin(), grid.end(), std::size_t{1});
    return grid;
}

WindowSearch window_search(std::span<const double> series, std::size_t train_len, const RnnConfig& base,
                           std::span<const std::size_t> grid, Metric metric) {
    if (grid.empty()) throw std::invalid_argument("window_search: empty window grid");
    if (train_len >= series.size()) throw std::invalid_argument("window_search: empty validation window");
    std::vector<WindowCandidate> log(grid.size());
    std::vector<std::optional<TrainedRnn>> models(grid.size());
    parallel_for(grid.size(), [&](std::size_t k) {
        log[k].window = grid[k];
        log[k].metric = std::numeric_limits<double>::quiet_NaN();
        try {
            RnnConfig cfg = base;
            cfg.window = grid[k];
            TrainedRnn model = rnn_train(series.first(train_len), cfg);
            log[k].metric = validation_metric(model, series, train_len, metric);
            models[k] = std::move(model);
        } catch (const std::exception& e) {
            log[k].failure = e.what();
        }
    });

    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < log.size(); ++k) {
        if (std::isnan(log[k].metric)) continue;
        if (!best || log[k].metric < log[*best].metric ||
            (log[k].metric == log[*best].metric && log[k].window < log[*best].window))
            best = k;
    }
    if (!best) throw std::runtime_error("window_search: every candidate window failed (" + log.front().failure + ")");
    return {std::move(*models[*best]), std::move(log)};
}

std::size_t RnnGrid::size() const {
    return cells.size() * windows.size() * layers.size() * units.size() * dropouts.size() * heads.size() *
           losses.size() * epochs.size() * batch_sizes.size() * optimizers.size() * learning_rates.size();
}

RnnConfig RnnGrid::at(std::size_t index, const RnnConfig& base) const {
    if (index >= size()) throw std::out_of_range("rnn grid index");
    RnnConfig c = base;
    auto take = [&index](const auto& values) {
        const auto& v = values[index % values.size()];
        index /= values.size();
        return v;
    };
    c.learning_rate = take(learning_rates);
    c.optimizer = take(optimizers);
    c.batch_size = take(batch_sizes);
    c.epochs = take(epochs);
    c.loss = take(losses);
    c.head = take(heads);
    c.dropout = take(dropouts);
    c.units = take(units);
    c.layers = take(layers);
    c.window = take(windows);
    c.cell = take(cells);
    return c;
}

std::vector<RnnConfig> grid_candidates(const RnnGrid& grid, const RnnConfig& base, std::size_t budget,
                                       std::uint64_t seed) {
    const std::size_t total = grid.size();
    if (total == 0) throw std::invalid_argument("rnn grid: some hyperparameter has no values");
    std::vector<std::size_t> picked;
    if (total <= budget) {
        picked.resize(total);
        std::iota(picked.begin(), picked.end(), std::size_t{0});
    } else {
        // Floyd's sampling of `budget` distinct indices.
        Rng rng(seed);
        std::set<std::size_t> chosen;
        for (std::size_t j = total - budget; j < total; ++j) {
            const std::size_t t = rng.below(j + 1);
            if (!chosen.insert(t).second) chosen.insert(j);
        }
        picked.assign(chosen.begin(), chosen.end());
    }
    std::vector<RnnConfig> out;
    out.reserve(picked.size());
    for (std::size_t i : picked) out.push_back(grid.at(i, base));
    return out;
}

HyperSearch hyperparameter_search(std::span<const double> series, std::size_t train_len,
                                  std::span<const RnnConfig> candidates, Metric metric, std::size_t budget,
                                  std::uint64_t seed) {
    if (budget == 0) throw std::invalid_argument("hyperparameter_search: budget must be positive");
    if (candidates.empty()) throw std::invalid_argument("hyperparameter_search: no candidates");
    if (train_len >= series.size()) throw std::invalid_argument("hyperparameter_search: empty validation window");

    std::vector<std::size_t> ids(candidates.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    if (ids.size() > budget) {
        Rng rng(seed);
        for (std::size_t i = 0; i < budget; ++i) std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
        ids.resize(budget);
        std::sort(ids.begin(), ids.end());
    }

    std::vector<HyperCandidate> log(ids.size());
    std::vector<std::optional<TrainedRnn>> models(ids.size());
    parallel_for(ids.size(), [&](std::size_t k) {
        log[k].config_id = ids[k];
        log[k].config = candidates[ids[k]];
        log[k].metric = std::numeric_limits<double>::quiet_NaN();
        try {
            TrainedRnn model = rnn_train(series.first(train_len), candidates[ids[k]]);
            log[k].metric = validation_metric(model, series, train_len, metric);
            models[k] = std::move(model);
        } catch (const std::exception& e) {
            log[k].failure = e.what();
        }
    });

    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < log.size(); ++k) {
        if (std::isnan(log[k].metric)) continue;
        if (!best || log[k].metric < log[*best].metric) best = k;
    }
    if (!best) throw std::runtime_error("hyperparameter_search: every candidate failed (" + log.front().failure + ")");
    return {std::move(*models[*best]), std::move(log)};
}

std::string search_log_csv(const HyperSearch& search) {
    std::ostringstream out;
    out << "config_id,window,units,layers,loss,optimizer,metric_value\n";
    for (const auto& c : search.log)
        out << c.config_id << ',' << c.config.window << ',' << c.config.units << ',' << c.config.layers << ','
            << to_string(c.config.loss) << ',' << to_string(c.config.optimizer) << ','
            << (std::isnan(c.metric) ? std::string("NA") : format_real(c.metric)) << '\n';
    return out.str();
}

std::string window_log_csv(const WindowSearch& search) {
    std::ostringstream out;
    out << "window,metric_value\n";
    for (const auto& c : search.log)
        out << c.window << ',' << (std::isnan(c.metric) ? std::string("NA") : format_real(c.metric)) << '\n';
    return out.str();
}

}  // namespace volforge
