// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "octaseg/core/config.hpp"
#include "octaseg/nn/mamba_blocks.hpp"

namespace octaseg {

// Full segmentation networks: two U-Net skeletons sharing one block grammar,
// and the two-stage cascade with RV-prior injection and ROI cropping.

template <typename T>
struct SegOut {
  Var<T> logits;  // pre-sigmoid map (B,1,H,W)
  Var<T> prob;    // sigmoid(logits)
};

/// Inverted-scale dropout mask; drawn once per call site from the trainer's
/// stream so runs are reproducible.
template <typename T>
Tensor<T> make_dropout_mask(Rng& rng, Shape s, double rate) {
  Tensor<T> m(s);
  T keep = static_cast<T>(1.0 - rate);
  for (long i = 0; i < m.numel(); ++i)
    m[i] = rng.uniform(0, 1) < rate ? T(0) : T(1) / keep;
  return m;
}

/// Strided 3x3 halving step. Even inputs halve exactly.
template <typename T>
class Downsample {
 public:
  Downsample() = default;
  Downsample(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long cin, long cout) {
    conv_ = Conv2dLayer<T>(reg, name + ".conv", rng, cout, cin, 3, 3, ConvSpec{2, 1, 1});
  }
  Var<T> operator()(const Var<T>& x) const { return conv_(x); }

 private:
  Conv2dLayer<T> conv_;
};

/// 2x bilinear upsample to the skip's size followed by a 1x1 channel map.
template <typename T>
class Upsample {
 public:
  Upsample() = default;
  Upsample(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long cin, long cout) {
    conv_ = Conv2dLayer<T>(reg, name + ".conv", rng, cout, cin, 1, 1);
  }
  Var<T> operator()(const Var<T>& x, long oh, long ow) const {
    return conv_(bilinear_resize(x, oh, ow));
  }

 private:
  Conv2dLayer<T> conv_;
};

/// Prediction head: 3x3 conv -> norm -> SiLU -> 1x1 conv to one channel.
template <typename T>
class FnconvHead {
 public:
  FnconvHead() = default;
  FnconvHead(ParamRegistry<T>& reg, const std::string& name, Rng& rng, long c) {
    conv3_ = Conv2dLayer<T>(reg, name + ".conv3", rng, c, c, 3, 3, ConvSpec{1, 1, 1});
    norm_ = NormLayer<T>(reg, name + ".norm", c);
    conv1_ = Conv2dLayer<T>(reg, name + ".conv1", rng, 1, c, 1, 1);
  }
  Var<T> operator()(const Var<T>& x) const { return conv1_(silu(norm_(conv3_(x)))); }

 private:
  Conv2dLayer<T> conv3_, conv1_;
  NormLayer<T> norm_;
};

enum class StageKind { Vessel, Zone };

/// U-Net over the residual scan blocks. Three encoder levels double the width
/// each time; the bottleneck optionally applies dropout and (vessel stage
/// only) a standalone multi-attention fusion stage. Inputs of any size are
/// right/bottom zero-padded to a multiple of 8 and the output is cropped back.
template <typename T>
class StageNet {
 public:
  StageNet() = default;
  StageNet(ParamRegistry<T>& reg, const std::string& name, Rng& rng, StageKind kind,
           long in_channels, const ModelConfig& cfg)
      : kind_(kind), dropout_(cfg.dropout_rate) {
    long b = cfg.base_channels, n = cfg.ssm_state_dim;
    require(b % 4 == 0, ErrorCode::BadChannels, "base channels must divide by 4");
    use_cmbf_ = kind == StageKind::Vessel && cfg.cmbf;
    if (use_cmbf_)
      stem_cmbf_ = CMBFBlock<T>(reg, name + ".stem", rng, in_channels, b, b);
    else
      stem_plain_ = Conv2dLayer<T>(reg, name + ".stem", rng, b, in_channels, 1, 1);

    auto block = [&](const std::string& bn, long c) {
      if (kind == StageKind::Vessel)
        rv_blocks_.push_back(
            RVMambaBlock<T>(reg, bn, rng, c, n, cfg.hdfe, cfg.vmaf, cfg.dsconv_mode));
      else
        faz_blocks_.push_back(
            FAZMambaBlock<T>(reg, bn, rng, c, n, cfg.hdfe, cfg.cfeb, cfg.dsconv_mode));
    };
    long c = b;
    for (int i = 0; i < 3; ++i) {
      block(name + ".enc" + std::to_string(i + 1), c);
      down_[i] = Downsample<T>(reg, name + ".down" + std::to_string(i + 1), rng, c, 2 * c);
      c *= 2;
    }
    block(name + ".mid", c);
    use_vmaf_mid_ = kind == StageKind::Vessel && cfg.vmaf;
    if (use_vmaf_mid_) vmaf_mid_ = VMAFBlock<T>(reg, name + ".mid_vmaf", rng, c);
    for (int i = 0; i < 3; ++i) {
      up_[i] = Upsample<T>(reg, name + ".up" + std::to_string(3 - i), rng, c, c / 2);
      c /= 2;
      aff_[i] = AFFBlock<T>(reg, name + ".aff" + std::to_string(3 - i), rng, c);
      block(name + ".dec" + std::to_string(3 - i), c);
    }
    head_ = FnconvHead<T>(reg, name + ".head", rng, b);
  }

  /// `drop_rng` non-null enables train-time dropout.
  SegOut<T> operator()(const Var<T>& image, Rng* drop_rng = nullptr) const {
    long H = image.dim(2), W = image.dim(3);
    long ph = (8 - H % 8) % 8, pw = (8 - W % 8) % 8;
    Var<T> x = (ph || pw) ? pad2d(image, 0, ph, 0, pw) : image;

    x = use_cmbf_ ? stem_cmbf_(x) : stem_plain_(x);
    Var<T> skips[3];
    int bi = 0;
    for (int i = 0; i < 3; ++i) {
      x = run_block(bi++, x);
      skips[i] = x;
      x = down_[i](x);
    }
    x = run_block(bi++, x);
    if (drop_rng && dropout_ > 0)
      x = dropout_mask(x, make_dropout_mask<T>(*drop_rng, x.shape(), dropout_));
    if (use_vmaf_mid_) x = vmaf_mid_(x);
    for (int i = 0; i < 3; ++i) {
      const Var<T>& skip = skips[2 - i];
      x = up_[i](x, skip.dim(2), skip.dim(3));
      x = aff_[i](skip, x);
      x = run_block(bi++, x);
    }
    Var<T> logits = head_(x);
    if (ph || pw) logits = crop2d(logits, 0, 0, H, W);
    return {logits, sigmoid(logits)};
  }

 private:
  Var<T> run_block(int i, const Var<T>& x) const {
    return kind_ == StageKind::Vessel ? rv_blocks_[static_cast<size_t>(i)](x)
                                      : faz_blocks_[static_cast<size_t>(i)](x);
  }

  StageKind kind_ = StageKind::Vessel;
  double dropout_ = 0;
  bool use_cmbf_ = false, use_vmaf_mid_ = false;
  CMBFBlock<T> stem_cmbf_;
  Conv2dLayer<T> stem_plain_;
  std::vector<RVMambaBlock<T>> rv_blocks_;
  std::vector<FAZMambaBlock<T>> faz_blocks_;
  Downsample<T> down_[3];
  Upsample<T> up_[3];
  AFFBlock<T> aff_[3];
  VMAFBlock<T> vmaf_mid_;
  FnconvHead<T> head_;
};

template <typename T>
struct JointOut {
  SegOut<T> rv;       // full-size vessel prediction
  SegOut<T> faz_roi;  // zone prediction at the network's working size
  Var<T> faz_full;    // zone probability pasted into a full-size zero canvas
  long roi_top = 0, roi_left = 0;
};

/// Two-stage cascade: the vessel stage runs at full size; its probability map
/// is optionally concatenated onto the image as a prior, the result is
/// optionally center-cropped to roi_size, and the zone stage runs on that.
template <typename T>
class JointNet {
 public:
  JointNet(ParamRegistry<T>& reg, Rng& rng, const ModelConfig& cfg) : cfg_(cfg) {
    rv_net_ = StageNet<T>(reg, "rv", rng, StageKind::Vessel, cfg.in_channels, cfg);
    long faz_in = cfg.in_channels + (cfg.rv_prior ? 1 : 0);
    faz_net_ = StageNet<T>(reg, "faz", rng, StageKind::Zone, faz_in, cfg);
  }

  JointOut<T> operator()(const Var<T>& image, Rng* drop_rng = nullptr) const {
    long H = image.dim(2), W = image.dim(3);
    JointOut<T> out;
    out.rv = rv_net_(image, drop_rng);

    Var<T> x2 = image;
    if (cfg_.rv_prior) {
      Var<T> prior = cfg_.stop_rv_gradient ? out.rv.prob.detach() : out.rv.prob;
      x2 = concat_c(image, prior);
    }
    if (cfg_.roi) {
      validate_config(cfg_, {H, W});
      out.roi_top = (H - cfg_.roi_size) / 2;
      out.roi_left = (W - cfg_.roi_size) / 2;
      x2 = crop2d(x2, out.roi_top, out.roi_left, cfg_.roi_size, cfg_.roi_size);
    }
    out.faz_roi = faz_net_(x2, drop_rng);
    out.faz_full = cfg_.roi
                       ? paste2d(out.faz_roi.prob, H, W, out.roi_top, out.roi_left)
                       : out.faz_roi.prob;
    return out;
  }

  const StageNet<T>& rv_net() const { return rv_net_; }
  const StageNet<T>& faz_net() const { return faz_net_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  StageNet<T> rv_net_, faz_net_;
};

/// Trainable-scalar totals grouped by the first `depth` dot-separated name
/// components, insertion-ordered.
template <typename T>
std::vector<std::pair<std::string, long>> param_breakdown(const ParamRegistry<T>& reg,
                                                          int depth = 2) {
  std::vector<std::pair<std::string, long>> rows;
  for (const auto& e : reg.entries()) {
    size_t pos = 0;
    bool whole = false;
    for (int d = 0; d < depth; ++d) {
      size_t dot = e.name.find('.', pos);
      if (dot == std::string::npos) {
        whole = true;
        break;
      }
      pos = dot + 1;
    }
    std::string key = whole ? e.name : e.name.substr(0, pos - 1);
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const auto& r) { return r.first == key; });
    if (it == rows.end())
      rows.emplace_back(key, e.var.value().numel());
    else
      it->second += e.var.value().numel();
  }
  return rows;
}

}  // namespace octaseg
