#include "moca/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "moca/io/image_io.hpp"

namespace moca {

void CodecConfig::validate() const {
    if (factor < 1) throw usage_error("codec: factor must be positive");
    if (latent_channels < 1) throw usage_error("codec: latent_channels must be positive");
    if (kind == CodecKind::identity_patch && latent_channels != 3 * factor * factor) {
        throw usage_error("codec: identity-patch requires latent_channels = 3*factor^2, got " +
                          std::to_string(latent_channels));
    }
}

// Latent channel layout for identity-patch: c' = (c*f + dy)*f + dx, i.e. the
// pixel channel is the outer index and the f x f sub-position the inner one.
LatentVideo encode_video(const VideoTensor& video, const CodecConfig& cfg) {
    cfg.validate();
    const int64_t T = video.t(), H = video.h(), W = video.w();
    const int f = cfg.factor;
    if (H % f != 0 || W % f != 0) {
        throw runtime_failure("encode_video: H=" + std::to_string(H) + " W=" + std::to_string(W) +
                              " not divisible by factor " + std::to_string(f));
    }
    if (cfg.kind != CodecKind::identity_patch) {
        throw runtime_failure("encode_video: learned-tiny codec requires trained parameters; use TinyCodec");
    }
    const int64_t Hh = H / f, Wh = W / f;
    LatentVideo out;
    out.latents = Tensor({T, cfg.latent_channels, Hh, Wh});
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t c = 0; c < 3; ++c) {
            for (int64_t y = 0; y < H; ++y) {
                for (int64_t x = 0; x < W; ++x) {
                    int64_t cc = (c * f + (y % f)) * f + (x % f);
                    float v = video.frames.at4(t, c, y, x);
                    out.latents.at4(t, cc, y / f, x / f) = 2.0f * v - 1.0f;
                }
            }
        }
    }
    return out;
}

VideoTensor decode_video(const LatentVideo& latent, const CodecConfig& cfg) {
    cfg.validate();
    if (latent.c() != cfg.latent_channels) {
        throw runtime_failure("decode_video: latent has " + std::to_string(latent.c()) +
                              " channels, config expects " + std::to_string(cfg.latent_channels));
    }
    if (cfg.kind != CodecKind::identity_patch) {
        throw runtime_failure("decode_video: learned-tiny codec requires trained parameters; use TinyCodec");
    }
    const int f = cfg.factor;
    const int64_t T = latent.t(), Hh = latent.h(), Wh = latent.w();
    VideoTensor out;
    out.frames = Tensor({T, 3, Hh * f, Wh * f});
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t c = 0; c < 3; ++c) {
            for (int64_t y = 0; y < Hh * f; ++y) {
                for (int64_t x = 0; x < Wh * f; ++x) {
                    int64_t cc = (c * f + (y % f)) * f + (x % f);
                    float v = 0.5f * (latent.latents.at4(t, cc, y / f, x / f) + 1.0f);
                    out.frames.at4(t, c, y, x) = std::clamp(v, 0.0f, 1.0f);
                }
            }
        }
    }
    return out;
}

Tensor encode_frame(const Tensor& frame_3hw, const CodecConfig& cfg) {
    VideoTensor v;
    v.frames = frame_3hw;
    v.frames.reshape({1, frame_3hw.dim(0), frame_3hw.dim(1), frame_3hw.dim(2)});
    LatentVideo l = encode_video(v, cfg);
    Tensor out = l.latents;
    out.reshape({l.c(), l.h(), l.w()});
    return out;
}

Tensor decode_frame(const Tensor& latent_chw, const CodecConfig& cfg) {
    LatentVideo l;
    l.latents = latent_chw;
    l.latents.reshape({1, latent_chw.dim(0), latent_chw.dim(1), latent_chw.dim(2)});
    VideoTensor v = decode_video(l, cfg);
    Tensor out = v.frames;
    out.reshape({3, v.h(), v.w()});
    return out;
}

namespace io {

namespace fs = std::filesystem;
using nlohmann::json;

void write_video_dir(const std::string& dir, const VideoTensor& video) {
    fs::create_directories(dir);
    const int64_t T = video.t(), H = video.h(), W = video.w();
    for (int64_t t = 0; t < T; ++t) {
        moca::io::ImageU8 img;
        img.width = static_cast<int>(W);
        img.height = static_cast<int>(H);
        img.rgb.resize(static_cast<size_t>(W) * H * 3);
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) {
                for (int64_t c = 0; c < 3; ++c) {
                    float v = std::clamp(video.frames.at4(t, c, y, x), 0.0f, 1.0f);
                    img.rgb[static_cast<size_t>((y * W + x) * 3 + c)] =
                        static_cast<uint8_t>(std::lround(v * 255.0f));
                }
            }
        }
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", static_cast<int>(t));
        moca::io::write_png((fs::path(dir) / name).string(), img);
    }
    json meta = {
        {"schema_version", "moca.video_meta.v1"},
        {"fps", video.fps},
        {"frames", T},
        {"height", H},
        {"width", W},
    };
    std::ofstream f(fs::path(dir) / "meta.json");
    f << meta.dump(2) << "\n";
}

VideoTensor read_video_dir(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "meta.json");
    if (!mf) throw runtime_failure("missing meta.json in " + dir);
    json meta = json::parse(mf);
    int64_t T = meta.at("frames").get<int64_t>();
    int64_t H = meta.at("height").get<int64_t>();
    int64_t W = meta.at("width").get<int64_t>();
    VideoTensor out;
    out.fps = meta.at("fps").get<double>();
    out.frames = Tensor({T, 3, H, W});
    for (int64_t t = 0; t < T; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", static_cast<int>(t));
        moca::io::ImageU8 img = moca::io::read_png((fs::path(dir) / name).string());
        if (img.width != W || img.height != H) {
            throw runtime_failure("frame size mismatch in " + dir + "/" + name);
        }
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) {
                for (int64_t c = 0; c < 3; ++c) {
                    out.frames.at4(t, c, y, x) =
                        static_cast<float>(img.rgb[static_cast<size_t>((y * W + x) * 3 + c)]) / 255.0f;
                }
            }
        }
    }
    return out;
}

}  // namespace io
}  // namespace moca
