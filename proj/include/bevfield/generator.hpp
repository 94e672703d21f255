// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/bevmap.hpp"
#include "bevfield/field.hpp"
#include "bevfield/signal.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bevfield {

enum class LiftMode { outer_product, concat };

struct GeneratorConfig {
    int input_res       = 64;
    int input_channels  = 64; // Fourier channels
    int hidden_channels = 32; // width of every encoder/decoder block
    int n_levels        = 4;
    int bottleneck_res  = 4;
    int out_channels    = 32;
    int modconv_kernel  = 3;
    int sel_kernel      = 1;
    int latent_dim      = 64;
    int bev_channels    = 11;
    int bev_feat_channels = 16;
    int mlp_hidden        = 64;

    PeConfig pe_cfg{4, 0.125};
    LiftMode lift_mode = LiftMode::outer_product;

    bool use_lowpass  = true;
    bool use_sel      = true;
    bool use_skips    = true;
    bool use_view_dir = false;

    double z_min = 0.0;
    double z_max = 8.0;

    // Fourier input band, cycles per BEV pixel.
    double fourier_min_cycles = 1.0 / 64.0;
    double fourier_max_cycles = 0.4;
    LowpassDesign lowpass{};

    static GeneratorConfig desk();
    static GeneratorConfig paper();

    /// Throws Error(invalid_argument) on inconsistent architecture numbers.
    void validate() const;
    int mlp_input_dims() const;

    bool operator==(const GeneratorConfig &) const = default;
};

nlohmann::json to_json(const GeneratorConfig &cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json &j);

struct LatentCode {
    std::vector<double> s;
};

/// s ~ N(0, I), deterministic in seed.
LatentCode sample_latent(std::uint64_t seed, int dim);

/// k x k convolution, weights laid out [ky][kx][cin][cout].
struct ConvLayer {
    int kernel = 1;
    int cin    = 0;
    int cout   = 0;
    std::vector<float> weight;
    std::vector<float> bias;
};

/// Dense layer, weights laid out [in][out]. Also used as a 1x1 convolution.
struct DenseLayer {
    int in  = 0;
    int out = 0;
    std::vector<float> weight;
    std::vector<float> bias;
};

struct ModConvLayer {
    DenseLayer style; // latent -> per-input-channel scale
    ConvLayer conv;
};

struct SelLayer {
    DenseLayer gamma; // BEV features -> per-channel scale offset
    DenseLayer beta;  // BEV features -> per-channel shift
};

struct BlockParams {
    SelLayer sel;
    ModConvLayer conv1;
    ModConvLayer conv2;
};

struct MlpParams {
    DenseLayer hidden1;
    DenseLayer hidden2;
    DenseLayer sigma;
    DenseLayer color;
};

struct GeneratorParams {
    GeneratorConfig config;
    std::uint64_t init_seed = 0;
    ConvLayer bev_conv1;
    ConvLayer bev_conv2;
    std::vector<BlockParams> encoders;
    std::vector<BlockParams> decoders;
    DenseLayer to_plane;
    MlpParams mlp;

    bool operator==(const GeneratorParams &other) const;
};

/// Fan-in scaled Gaussian initialization, deterministic in (cfg, seed).
GeneratorParams init_params(const GeneratorConfig &cfg, std::uint64_t seed);

std::vector<std::uint8_t> encode_weights(const GeneratorParams &p);
GeneratorParams decode_weights(std::span<const std::uint8_t> bytes);
void save_weights(const GeneratorParams &p, const std::string &path);
GeneratorParams load_weights(const std::string &path);

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Zero-padded "same" convolution with bias and optional leaky ReLU (0.2).
FeatureGrid conv2d(const FeatureGrid &x, const ConvLayer &layer, bool activate);

/// Per-pixel dense layer (1x1 convolution) without activation.
FeatureGrid conv1x1(const FeatureGrid &x, const DenseLayer &layer);

FeatureGrid concat_channels(const FeatureGrid &a, const FeatureGrid &b);

/// Two 3x3 convolutions with a leaky ReLU between; spatial dims preserved.
FeatureGrid bev_encode(const GeneratorParams &params, const BevMap &b);

/// Per-channel instance normalization over all pixels.
FeatureGrid instance_norm(const FeatureGrid &a);

/// out = (1 + gamma(bev)) * norm(a) + beta(bev), gamma/beta via 1x1 convolutions.
FeatureGrid sel(const FeatureGrid &a, const FeatureGrid &bev_feat, const SelLayer &layer);

/// Affine map from the latent to the per-input-channel style scales.
std::vector<double> style_vector(const DenseLayer &affine, const LatentCode &s);

/// Modulated + demodulated convolution with bias and leaky ReLU (0.2).
FeatureGrid modconv(const FeatureGrid &a, std::span<const double> style, const ConvLayer &conv);
FeatureGrid modconv(const FeatureGrid &a, const LatentCode &s, const ModConvLayer &layer);

/// Feature plane for a local BEV. `window` places b in the global frame: the
/// Fourier input is evaluated at global pixels window.origin + (i, j) with the
/// global frame anchored at pixel (0, 0) and b's world scale. The returned
/// plane carries b's world placement and has cfg.out_channels channels.
FeatureGrid unet_forward(const GeneratorParams &params, const BevMap &b, const LatentCode &s,
                         const WindowSpec &window);

/// MLP with weights converted to double, shared read-only by field queries.
class FieldMlp {
  public:
    explicit FieldMlp(const GeneratorParams &params);

    const GeneratorConfig &config() const { return mCfg; }

    /// features: plane channels at (x, y); returns color and density.
    FieldSample evaluate(std::span<const double> features, double z, const Vec3 &dir) const;

    /// Same features at several heights. The first layer is factored so the
    /// plane features are contracted once per call.
    void evaluate_column(std::span<const double> features, std::span<const double> zs,
                         const Vec3 &dir, std::span<FieldSample> out) const;

  private:
    struct Dense {
        int in  = 0;
        int out = 0;
        std::vector<double> w; // [out][in]
        std::vector<double> b;
    };
    static Dense convert(const DenseLayer &layer);
    FieldSample heads(const double *h1, const Vec3 &dir) const;

    GeneratorConfig mCfg;
    Dense mHidden1, mHidden2, mSigma, mColor;
};

/// Point query: sample the plane at (x, y), lift with pe(z), run the MLP.
FieldSample lift_and_query(const FeatureGrid &plane, const FieldMlp &mlp, double x, double y,
                           double z, const Vec3 &dir);

class NeuralField final : public RadianceField {
  public:
    NeuralField(std::shared_ptr<const FeatureGrid> plane, std::shared_ptr<const FieldMlp> mlp);

    FieldSample query_at(const Vec3 &anchor, const Vec3 &offset, const Vec3 &dir) const override;
    void query_ray(const Vec3 &anchor, const Vec3 &dir, std::span<const double> ts,
                   std::span<FieldSample> out) const override;

    const FeatureGrid &plane() const { return *mPlane; }

  private:
    std::shared_ptr<const FeatureGrid> mPlane;
    std::shared_ptr<const FieldMlp> mMlp;
};

/// Runs unet_forward once and wraps the plane and MLP as a radiance field.
std::shared_ptr<NeuralField> neural_field(const GeneratorParams &params, const BevMap &b,
                                          const LatentCode &s, const WindowSpec &window);

double softplus(double x);
double sigmoid(double x);

} // namespace bevfield
