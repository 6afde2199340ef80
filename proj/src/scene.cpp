#include "moca/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "moca/core/error.hpp"

namespace moca {

std::array<float, 3> rgb_of(ColorName c) {
    switch (c) {
        case ColorName::black:   return {0, 0, 0};
        case ColorName::red:     return {1, 0, 0};
        case ColorName::green:   return {0, 1, 0};
        case ColorName::blue:    return {0, 0, 1};
        case ColorName::yellow:  return {1, 1, 0};
        case ColorName::magenta: return {1, 0, 1};
        case ColorName::cyan:    return {0, 1, 1};
        case ColorName::white:   return {1, 1, 1};
    }
    throw runtime_failure("bad color enum");
}

const char* color_word(ColorName c) {
    switch (c) {
        case ColorName::black:   return "black";
        case ColorName::red:     return "red";
        case ColorName::green:   return "green";
        case ColorName::blue:    return "blue";
        case ColorName::yellow:  return "yellow";
        case ColorName::magenta: return "magenta";
        case ColorName::cyan:    return "cyan";
        case ColorName::white:   return "white";
    }
    throw runtime_failure("bad color enum");
}

const char* shape_word(ShapeKind s) {
    switch (s) {
        case ShapeKind::square:   return "square";
        case ShapeKind::circle:   return "circle";
        case ShapeKind::triangle: return "triangle";
    }
    throw runtime_failure("bad shape enum");
}

const char* style_word(StyleKind s) {
    switch (s) {
        case StyleKind::plain:     return "plain";
        case StyleKind::grayscale: return "grayscale";
        case StyleKind::sepia:     return "sepia";
    }
    throw runtime_failure("bad style enum");
}

const char* direction_word(Direction d) {
    switch (d) {
        case Direction::right:     return "right";
        case Direction::left:      return "left";
        case Direction::up:        return "up";
        case Direction::down:      return "down";
        case Direction::upright:   return "upright";
        case Direction::upleft:    return "upleft";
        case Direction::downright: return "downright";
        case Direction::downleft:  return "downleft";
        case Direction::still:     return "still";
    }
    throw runtime_failure("bad direction enum");
}

namespace {

template <typename Enum, int N>
Enum from_word(const std::string& w, const char* (*word)(Enum), const char* what) {
    for (int i = 0; i < N; ++i) {
        Enum e = static_cast<Enum>(i);
        if (w == word(e)) return e;
    }
    throw usage_error(std::string("unknown ") + what + " word: '" + w + "'");
}

}  // namespace

ColorName color_from_word(const std::string& w) {
    return from_word<ColorName, 8>(w, color_word, "color");
}
ShapeKind shape_from_word(const std::string& w) {
    return from_word<ShapeKind, 3>(w, shape_word, "shape");
}
StyleKind style_from_word(const std::string& w) {
    return from_word<StyleKind, 3>(w, style_word, "style");
}
Direction direction_from_word(const std::string& w) {
    return from_word<Direction, 9>(w, direction_word, "direction");
}

std::array<int, 2> velocity_of(Direction d, int speed) {
    switch (d) {
        case Direction::right:     return {speed, 0};
        case Direction::left:      return {-speed, 0};
        case Direction::up:        return {0, -speed};
        case Direction::down:      return {0, speed};
        case Direction::upright:   return {speed, -speed};
        case Direction::upleft:    return {-speed, -speed};
        case Direction::downright: return {speed, speed};
        case Direction::downleft:  return {-speed, speed};
        case Direction::still:     return {0, 0};
    }
    throw runtime_failure("bad direction enum");
}

Direction direction_of(double vx, double vy) {
    auto sgn = [](double v) { return v > 0.5 ? 1 : (v < -0.5 ? -1 : 0); };
    int sx = sgn(vx), sy = sgn(vy);
    if (sx == 0 && sy == 0) return Direction::still;
    if (sy == 0) return sx > 0 ? Direction::right : Direction::left;
    if (sx == 0) return sy > 0 ? Direction::down : Direction::up;
    if (sy < 0) return sx > 0 ? Direction::upright : Direction::upleft;
    return sx > 0 ? Direction::downright : Direction::downleft;
}

std::array<float, 3> apply_style(StyleKind style, const std::array<float, 3>& rgb) {
    float r = rgb[0], g = rgb[1], b = rgb[2];
    switch (style) {
        case StyleKind::plain:
            return rgb;
        case StyleKind::grayscale: {
            float y = 0.299f * r + 0.587f * g + 0.114f * b;
            return {y, y, y};
        }
        case StyleKind::sepia:
            return {std::min(1.0f, 0.393f * r + 0.769f * g + 0.189f * b),
                    std::min(1.0f, 0.349f * r + 0.686f * g + 0.168f * b),
                    std::min(1.0f, 0.272f * r + 0.534f * g + 0.131f * b)};
    }
    throw runtime_failure("bad style enum");
}

void SceneSpec::validate(int t, int h, int w) const {
    if (size < 4) throw usage_error("scene: size must be at least 4 px");
    if (shape_color == bg_color) throw usage_error("scene: shape and background colors coincide");
    for (int i = 0; i < t; ++i) {
        int x = x0 + i * vx, y = y0 + i * vy;
        if (x < 0 || y < 0 || x + size > w || y + size > h) {
            throw usage_error("scene: shape leaves the " + std::to_string(w) + "x" +
                              std::to_string(h) + " frame at t=" + std::to_string(i));
        }
    }
}

bool in_shape(const SceneSpec& s, int t, int x, int y) {
    int lx = x - (s.x0 + t * s.vx);
    int ly = y - (s.y0 + t * s.vy);
    if (lx < 0 || ly < 0 || lx >= s.size || ly >= s.size) return false;
    switch (s.shape) {
        case ShapeKind::square:
            return true;
        case ShapeKind::circle: {
            // center at the half-integer middle of the box so the support is
            // symmetric and translates exactly with integer velocity
            double c = (s.size - 1) / 2.0;
            double dx = lx - c, dy = ly - c;
            double r = s.size / 2.0;
            return dx * dx + dy * dy <= r * r;
        }
        case ShapeKind::triangle: {
            // apex-up isoceles: row ly spans a width growing linearly to size
            double half = (ly + 1) / 2.0;
            double c = (s.size - 1) / 2.0;
            return std::fabs(lx - c) <= half;
        }
    }
    return false;
}

VideoTensor render_scene(const SceneSpec& s, int t, int h, int w) {
    s.validate(t, h, w);
    auto fg = apply_style(s.style, rgb_of(s.shape_color));
    auto bg = apply_style(s.style, rgb_of(s.bg_color));
    VideoTensor out;
    out.frames = Tensor({t, 3, h, w});
    for (int i = 0; i < t; ++i) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const auto& px = in_shape(s, i, x, y) ? fg : bg;
                for (int c = 0; c < 3; ++c) out.frames.at4(i, c, y, x) = px[static_cast<size_t>(c)];
            }
        }
    }
    return out;
}

std::string prompt_for(const SceneSpec& s) {
    std::string p = "a ";
    p += color_word(s.shape_color);
    p += " ";
    p += shape_word(s.shape);
    p += " moving ";
    p += direction_word(direction_of(s.vx, s.vy));
    p += " on a ";
    p += color_word(s.bg_color);
    p += " background";
    if (s.style != StyleKind::plain) {
        p += ", ";
        p += style_word(s.style);
    }
    return p;
}

PromptAttrs parse_prompt(const std::string& text) {
    std::string clean = text;
    for (char& c : clean)
        if (std::string(",.;:!?").find(c) != std::string::npos) c = ' ';
    std::istringstream ss(clean);
    std::vector<std::string> w;
    std::string word;
    while (ss >> word) w.push_back(word);

    auto fail = [&] {
        throw usage_error(
            "prompt does not match 'a <color> <shape> moving <direction> on a <color> "
            "background[, <style>]': " +
            text);
    };
    if (w.size() != 9 && w.size() != 10) fail();
    if (w[0] != "a" || w[3] != "moving" || w[5] != "on" || w[6] != "a" || w[8] != "background")
        fail();
    PromptAttrs a;
    try {
        a.shape_color = color_from_word(w[1]);
        a.shape = shape_from_word(w[2]);
        a.direction = direction_from_word(w[4]);
        a.bg_color = color_from_word(w[7]);
        a.style = w.size() == 10 ? style_from_word(w[9]) : StyleKind::plain;
    } catch (const usage_error&) {
        fail();
    }
    return a;
}

}  // namespace moca
