#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "moca/codec.hpp"
#include "moca/core/rng.hpp"
#include "moca/benchmark.hpp"
#include "moca/io/tensor_io.hpp"
#include "moca/tiny_codec.hpp"

using namespace moca;

namespace {

VideoTensor random_video(Rng& rng, int64_t t, int64_t h, int64_t w) {
    VideoTensor v;
    v.frames = Tensor({t, 3, h, w});
    for (auto& x : v.frames.data) x = rng.uniform_f();
    return v;
}

}  // namespace

TEST_CASE("identity-patch config validation") {
    CodecConfig cfg;
    cfg.validate();  // 4 / 48 default is consistent
    cfg.latent_channels = 47;
    CHECK_THROWS_AS(cfg.validate(), usage_error);
    cfg.factor = 0;
    CHECK_THROWS_AS(cfg.validate(), usage_error);
}

TEST_CASE("identity-patch encode shapes and value map") {
    Rng rng(1);
    VideoTensor v = random_video(rng, 8, 64, 64);
    CodecConfig cfg;
    LatentVideo z = encode_video(v, cfg);
    CHECK(z.t() == 8);
    CHECK(z.c() == 48);
    CHECK(z.h() == 16);
    CHECK(z.w() == 16);
    // [0,1] -> [-1,1], exact affine map
    for (float x : z.latents.data) {
        CHECK(x >= -1.0f);
        CHECK(x <= 1.0f);
    }
    // spot-check layout: pixel (c=1, y=5, x=6) of frame 3 lands in latent
    // channel (1*4 + 5%4)*4 + 6%4 = (4+1)*4+2 = 22 at (5/4, 6/4) = (1,1)
    float px = v.frames.at4(3, 1, 5, 6);
    CHECK(z.latents.at4(3, 22, 1, 1) == 2.0f * px - 1.0f);
}

TEST_CASE("identity-patch roundtrip is exact up to float affine") {
    Rng rng(2);
    VideoTensor v = random_video(rng, 4, 32, 48);
    CodecConfig cfg;
    LatentVideo z = encode_video(v, cfg);
    VideoTensor back = decode_video(z, cfg);
    REQUIRE(back.frames.same_shape(v.frames));
    for (size_t i = 0; i < v.frames.data.size(); ++i)
        CHECK(back.frames.data[i] == doctest::Approx(v.frames.data[i]).epsilon(1e-6));
}

TEST_CASE("encode is frame-wise: editing frame t only changes latent frame t") {
    Rng rng(3);
    VideoTensor v = random_video(rng, 5, 16, 16);
    CodecConfig cfg;
    LatentVideo z0 = encode_video(v, cfg);
    v.frames.at4(2, 0, 7, 7) += 0.25f;
    LatentVideo z1 = encode_video(v, cfg);
    for (int64_t t = 0; t < 5; ++t) {
        int64_t per = z0.c() * z0.h() * z0.w();
        bool any_diff = false;
        for (int64_t i = 0; i < per; ++i)
            any_diff |= z0.latents[t * per + i] != z1.latents[t * per + i];
        CHECK(any_diff == (t == 2));
    }
}

TEST_CASE("decode clamps out-of-range latents into [0,1] pixels") {
    CodecConfig cfg;
    LatentVideo z;
    z.latents = Tensor({1, 48, 2, 2});
    z.latents.fill(3.5f);
    VideoTensor v = decode_video(z, cfg);
    for (float x : v.frames.data) CHECK(x == 1.0f);
    z.latents.fill(-9.0f);
    v = decode_video(z, cfg);
    for (float x : v.frames.data) CHECK(x == 0.0f);
}

TEST_CASE("encode rejects sizes not divisible by the factor") {
    Rng rng(4);
    VideoTensor v = random_video(rng, 2, 30, 32);
    CodecConfig cfg;
    CHECK_THROWS_AS(encode_video(v, cfg), runtime_failure);
}

TEST_CASE("frame variants agree with the video path") {
    Rng rng(5);
    VideoTensor v = random_video(rng, 1, 16, 16);
    CodecConfig cfg;
    Tensor frame = v.frames;
    frame.reshape({3, 16, 16});
    Tensor z = encode_frame(frame, cfg);
    CHECK(z.shape == std::vector<int64_t>{48, 4, 4});
    LatentVideo zv = encode_video(v, cfg);
    for (size_t i = 0; i < z.data.size(); ++i) CHECK(z.data[i] == zv.latents.data[i]);
    Tensor back = decode_frame(z, cfg);
    for (size_t i = 0; i < back.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(frame.data[i]).epsilon(1e-6));
}

TEST_CASE("video directory roundtrip preserves pixels at 8-bit precision") {
    Rng rng(6);
    VideoTensor v = random_video(rng, 3, 16, 24);
    v.fps = 4.0;
    auto dir = std::filesystem::temp_directory_path() / "moca_codec_io_test";
    std::filesystem::remove_all(dir);
    io::write_video_dir(dir.string(), v);
    CHECK(std::filesystem::exists(dir / "frame_0000.png"));
    CHECK(std::filesystem::exists(dir / "frame_0002.png"));
    CHECK(std::filesystem::exists(dir / "meta.json"));
    VideoTensor back = io::read_video_dir(dir.string());
    CHECK(back.fps == v.fps);
    REQUIRE(back.frames.same_shape(v.frames));
    for (size_t i = 0; i < v.frames.data.size(); ++i)
        CHECK(std::fabs(back.frames.data[i] - v.frames.data[i]) <= 0.5f / 255.0f + 1e-6f);
    std::filesystem::remove_all(dir);
}

TEST_CASE("video directory writes are byte-identical across runs") {
    Rng rng(7);
    VideoTensor v = random_video(rng, 2, 16, 16);
    auto base = std::filesystem::temp_directory_path();
    auto d1 = base / "moca_codec_det_a", d2 = base / "moca_codec_det_b";
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
    io::write_video_dir(d1.string(), v);
    io::write_video_dir(d2.string(), v);
    for (const char* name : {"frame_0000.png", "frame_0001.png", "meta.json"}) {
        std::ifstream f1(d1 / name, std::ios::binary), f2(d2 / name, std::ios::binary);
        std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(s1.size() > 0);
        CHECK(s1 == s2);
    }
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}

TEST_CASE("tensor file roundtrip and validation") {
    Rng rng(8);
    Tensor t({3, 5, 2});
    for (auto& x : t.data) x = rng.normal_f();
    auto path = (std::filesystem::temp_directory_path() / "moca_tensor_io_test.tns").string();
    io::write_tensor(path, t);
    Tensor back = io::read_tensor(path);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);
    CHECK_THROWS_AS(io::read_tensor("/nonexistent/moca.tns"), runtime_failure);
    std::filesystem::remove(path);
}

TEST_CASE("learned-tiny codec shapes, determinism and validation") {
    CodecConfig cfg;
    cfg.kind = CodecKind::learned_tiny;
    TinyCodec codec(cfg, 5);
    Rng rng(31);
    VideoTensor v = random_video(rng, 2, 16, 16);

    LatentVideo z = codec.encode(v);
    CHECK(z.latents.shape == std::vector<int64_t>{2, 48, 4, 4});
    VideoTensor back = codec.decode(z);
    CHECK(back.frames.shape == v.frames.shape);
    for (float x : back.frames.data) CHECK((x >= 0.0f && x <= 1.0f));

    TinyCodec twin(cfg, 5);
    CHECK(twin.encode(v).latents.data == z.latents.data);
    TinyCodec other(cfg, 6);
    CHECK(other.encode(v).latents.data != z.latents.data);

    Tensor frame1({3, 16, 16});
    std::copy_n(v.frames.ptr() + frame1.numel(), frame1.numel(), frame1.ptr());
    Tensor lat1 = codec.encode_frame(frame1);
    CHECK(std::vector<float>(z.latents.data.begin() + lat1.numel(),
                             z.latents.data.end()) == lat1.data);

    CodecConfig idcfg;
    CHECK_THROWS_AS(TinyCodec(idcfg, 1), usage_error);
    CHECK_THROWS_AS(codec.train_step(Tensor({2, 1, 8, 8}), 1e-2), usage_error);
    CHECK_THROWS_AS(codec.train_step(Tensor({2, 3, 8, 8}), 0.0), usage_error);
}

TEST_CASE("learned-tiny codec trains to a faithful roundtrip") {
    CodecConfig cfg;
    cfg.kind = CodecKind::learned_tiny;
    TinyCodec codec(cfg, 5);

    auto scene_batch = [](int n, uint64_t seed) {
        Tensor out({n, 3, 64, 64});
        for (int i = 0; i < n; ++i) {
            Rng rng = Rng::derive(seed, static_cast<uint64_t>(i));
            SceneSpec s = sample_scene(rng, 8, 64, 64);
            s.style = static_cast<StyleKind>(rng.uniform_int(3));
            VideoTensor v = render_scene(s, 1, 64, 64);
            std::copy_n(v.frames.ptr(), v.frames.numel(), out.ptr() + i * v.frames.numel());
        }
        return out;
    };

    double first = codec.train_step(scene_batch(8, 100), 1e-2);
    double last = first;
    for (int step = 1; step < 300; ++step) {
        last = codec.train_step(scene_batch(8, 100 + static_cast<uint64_t>(step % 4)), 1e-2);
    }
    CHECK(last < 0.05 * first);

    // held-out scenes the optimizer never saw
    double worst = 0.0;
    for (uint64_t s = 900; s < 904; ++s) {
        Rng rng = Rng::derive(s, 0);
        SceneSpec spec = sample_scene(rng, 8, 64, 64);
        spec.style = static_cast<StyleKind>(rng.uniform_int(3));
        worst = std::max(worst, codec.roundtrip_mae(render_scene(spec, 8, 64, 64)));
    }
    CHECK(worst < 0.05);
}
