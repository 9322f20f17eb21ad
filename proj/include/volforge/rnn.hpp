#pragma once

#include "volforge/classical.hpp"
#include "volforge/rng.hpp"
#include "volforge/series.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace volforge {

enum class CellType { lstm, gru };
enum class HeadActivation { linear, relu, softmax, tanh };
enum class LossKind { mse, mae, huber };
enum class OptimizerKind { sgd, rmsprop, adam };

CellType parse_cell(std::string_view name);
HeadActivation parse_head(std::string_view name);
LossKind parse_loss(std::string_view name);
OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(CellType v);
std::string_view to_string(HeadActivation v);
std::string_view to_string(LossKind v);
std::string_view to_string(OptimizerKind v);

struct RnnConfig {
    CellType cell = CellType::lstm;
    std::size_t window = 22;
    std::size_t layers = 1;
    std::size_t units = 20;
    /// 0 disables dropout; otherwise one of the grid values.
    double dropout = 0.0;
    HeadActivation head = HeadActivation::linear;
    LossKind loss = LossKind::mse;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    /// GRU gates carry no bias unless this is set.
    bool gru_bias = false;

    /// Window 1..50, layers 1..5, units in {5,10,20,30,50,100,200},
    /// dropout 0 or in {0.01,0.05,0.1,0.2,0.3}, batch 1..128, epochs >= 1,
    /// finite learning rate >= 0. Throws ConfigError.
    void validate() const;
    std::string describe() const;
};

/// All parameters in one flat vector. Per layer: the gate matrices stacked
/// row-wise into a (G*H) x (H + in) block acting on [h_{t-1}, x_t]
/// (column-major), then the stacked biases (G*H). LSTM gate order is
/// f, i, C, o; GRU is z, r, candidate. GRU biases exist only when enabled.
/// The head (H weights, 1 bias) comes last.
class RnnWeights {
public:
    RnnWeights() = default;
    RnnWeights(CellType cell, std::size_t layers, std::size_t units, bool bias);

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], forget-gate bias 1.
    static RnnWeights initialize(const RnnConfig& config, Rng& rng);

    CellType cell() const noexcept { return cell_; }
    std::size_t layers() const noexcept { return layers_; }
    std::size_t units() const noexcept { return units_; }
    bool has_bias() const noexcept { return bias_; }
    std::size_t gates() const noexcept { return cell_ == CellType::lstm ? 4 : 3; }
    std::size_t input_size(std::size_t layer) const noexcept { return layer == 0 ? 1 : units_; }

    Eigen::Map<Eigen::MatrixXd> stacked(std::size_t layer);
    Eigen::Map<const Eigen::MatrixXd> stacked(std::size_t layer) const;
    Eigen::Map<Eigen::VectorXd> stacked_bias(std::size_t layer);
    Eigen::Map<const Eigen::VectorXd> stacked_bias(std::size_t layer) const;
    Eigen::MatrixXd gate_matrix(std::size_t layer, std::size_t gate) const;
    Eigen::Map<Eigen::VectorXd> head_weights();
    Eigen::Map<const Eigen::VectorXd> head_weights() const;
    double& head_bias() { return data_.back(); }
    double head_bias() const { return data_.back(); }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }
    /// Human-readable name of flat parameter `index`, e.g. "layer0.W_f[2,3]".
    std::string parameter_name(std::size_t index) const;

    /// Text tensor listing, format `volforge-rnn-weights 1`, one tensor per
    /// block with a shape header, values in shortest round-trip decimal.
    std::string dump() const;
    static RnnWeights parse(std::string_view text);

private:
    std::size_t layer_offset(std::size_t layer) const;
    std::size_t bias_offset(std::size_t layer) const;
    std::size_t head_offset() const;

    CellType cell_ = CellType::lstm;
    std::size_t layers_ = 0;
    std::size_t units_ = 0;
    bool bias_ = true;
    std::vector<double> data_;
};

struct LstmState {
    Eigen::VectorXd h;
    Eigen::VectorXd c;
};

/// One LSTM step for `layer`; throws std::invalid_argument on shape mismatch.
LstmState lstm_cell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev,
                    const RnnWeights& weights, std::size_t layer = 0);

/// One GRU step for `layer`.
Eigen::VectorXd gru_cell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev, const RnnWeights& weights,
                         std::size_t layer = 0);

/// Unrolls every layer over the window from zero states and applies the head
/// to the final hidden state of the last layer. Scaled units.
double rnn_forward(std::span<const double> window, const RnnWeights& weights, HeadActivation head,
                   std::size_t expected_window);

/// Mean loss of one batch without dropout; fills `gradient` (same layout as
/// the weights) when given. Gradients are unclipped.
double rnn_batch_loss(const RnnWeights& weights, const RnnConfig& config,
                      const std::vector<std::vector<double>>& inputs, std::span<const double> targets,
                      std::vector<double>* gradient = nullptr);

struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t parameters = 0;
    std::string worst_parameter;
};

/// Central differences with `step` against the analytic BPTT gradient.
/// Relative error is |a - n| / max(|a|, |n|, 1e-5): a 1e-6 central
/// difference carries round-off near 1e-10, so smaller gradients are judged
/// on an absolute 1e-9 scale.
GradientCheck rnn_gradient_check(const RnnConfig& config, const RnnWeights& weights,
                                 const std::vector<std::vector<double>>& inputs, std::span<const double> targets,
                                 double step = 1e-6);

struct TrainedRnn {
    RnnConfig config;
    RnnWeights weights;
    MinMaxScaler scaler = MinMaxScaler::from_bounds(0.0, 1.0);
    /// Mean of the pre-update batch losses of each epoch (scaled units).
    std::vector<double> loss_curve;
    std::vector<std::string> warnings;

    /// Next value in original units from the last `window` values of `history`.
    double predict(std::span<const double> history) const;
};

/// Trains on (window -> next value) pairs of the min-max scaled training
/// series. A constant training series uses bounds [v, v + 1]. Throws
/// std::invalid_argument if the series has <= window + 10 points and
/// std::runtime_error naming epoch and batch on a non-finite loss.
TrainedRnn rnn_train(std::span<const double> train, const RnnConfig& config);

/// Rolling one-step forecasts of series[train_len..] with frozen weights.
std::vector<double> rnn_rolling_forecast(const TrainedRnn& model, std::span<const double> series,
                                         std::size_t train_len);

struct WindowCandidate {
    std::size_t window = 0;
    double metric = 0.0;  // NaN when training failed
    std::string failure;
};

struct WindowSearch {
    TrainedRnn model;
    std::vector<WindowCandidate> log;
};

/// One model per window (same seed), trained on series[0, train_len) and
/// scored on the rest. Ties go to the smaller window.
WindowSearch window_search(std::span<const double> series, std::size_t train_len, const RnnConfig& base,
                           std::span<const std::size_t> grid, Metric metric);

std::vector<std::size_t> default_window_grid();

/// Value lists per hyperparameter; the candidate set is their product.
struct RnnGrid {
    std::vector<CellType> cells{CellType::lstm};
    std::vector<std::size_t> windows{22};
    std::vector<std::size_t> layers{1, 2, 3, 4, 5};
    std::vector<std::size_t> units{5, 10, 20, 30, 50, 100, 200};
    std::vector<double> dropouts{0.01, 0.05, 0.1, 0.2, 0.3};
    std::vector<HeadActivation> heads{HeadActivation::linear, HeadActivation::relu, HeadActivation::softmax,
                                      HeadActivation::tanh};
    std::vector<LossKind> losses{LossKind::mae, LossKind::mse, LossKind::huber};
    std::vector<std::size_t> epochs{1, 2, 3, 4, 5, 10, 20, 30, 50, 100, 1000};
    std::vector<std::size_t> batch_sizes{1, 2, 4, 8, 16, 32, 64, 128};
    std::vector<OptimizerKind> optimizers{OptimizerKind::rmsprop, OptimizerKind::sgd, OptimizerKind::adam};
    std::vector<double> learning_rates{1e-3};

    std::size_t size() const;
    /// Candidate `index` in mixed-radix order (last field varies fastest);
    /// other fields are copied from `base`.
    RnnConfig at(std::size_t index, const RnnConfig& base) const;
};

/// The whole product when it fits the budget, otherwise `budget` distinct
/// indices drawn with `seed`, in ascending index order.
std::vector<RnnConfig> grid_candidates(const RnnGrid& grid, const RnnConfig& base, std::size_t budget,
                                       std::uint64_t seed);

struct HyperCandidate {
    std::size_t config_id = 0;
    RnnConfig config;
    double metric = 0.0;  // NaN when training failed
    std::string failure;
};

struct HyperSearch {
    TrainedRnn model;
    std::vector<HyperCandidate> log;
};

/// Evaluates candidates in order (at most `budget`, a seeded subsample when
/// there are more). Ties go to the earlier candidate. budget 0 throws.
HyperSearch hyperparameter_search(std::span<const double> series, std::size_t train_len,
                                  std::span<const RnnConfig> candidates, Metric metric, std::size_t budget,
                                  std::uint64_t seed);

/// `config_id,window,units,layers,loss,optimizer,metric_value`.
std::string search_log_csv(const HyperSearch& search);
std::string window_log_csv(const WindowSearch& search);

}  // namespace volforge
