#pragma once

#include <array>
#include <string>

#include "moca/codec.hpp"

namespace moca {

// Colors are the eight corners of the RGB cube. Every rendered pixel is then
// exactly 0 or 1 per channel, which pins the latent second moment to 1 and
// makes nearest-palette classification exact.
enum class ColorName { black, red, green, blue, yellow, magenta, cyan, white };
inline constexpr int kNumColors = 8;

enum class ShapeKind { square, circle, triangle };
enum class StyleKind { plain, grayscale, sepia };

// Compass direction of motion; `still` covers zero velocity.
enum class Direction { right, left, up, down, upright, upleft, downright, downleft, still };

std::array<float, 3> rgb_of(ColorName c);
const char* color_word(ColorName c);
const char* shape_word(ShapeKind s);
const char* style_word(StyleKind s);
const char* direction_word(Direction d);

ColorName color_from_word(const std::string& w);
ShapeKind shape_from_word(const std::string& w);
StyleKind style_from_word(const std::string& w);
Direction direction_from_word(const std::string& w);

// Integer velocity for a direction at integer speed (px/frame); y grows down.
std::array<int, 2> velocity_of(Direction d, int speed);
// Classification of a velocity by sign pattern; (0,0) -> still.
Direction direction_of(double vx, double vy);

std::array<float, 3> apply_style(StyleKind style, const std::array<float, 3>& rgb);

// One moving shape over a static background. Positions and velocities are
// integer pixels so centroids translate exactly and motion oracles are sharp.
struct SceneSpec {
    ShapeKind shape = ShapeKind::square;
    ColorName shape_color = ColorName::red;
    ColorName bg_color = ColorName::white;
    int size = 16;       // bounding-box side in px
    int x0 = 8, y0 = 8;  // top-left of the bounding box at frame 0
    int vx = 2, vy = 0;  // px/frame
    StyleKind style = StyleKind::plain;

    // Throws usage_error when the shape leaves the frame within T frames or
    // colors coincide.
    void validate(int t, int h, int w) const;
};

// True when pixel (x, y) is inside the shape at frame index t.
bool in_shape(const SceneSpec& s, int t, int x, int y);

// Hard-edged render, frames in [0,1], shape T x 3 x H x W.
VideoTensor render_scene(const SceneSpec& s, int t, int h, int w);

// "a <color> <shape> moving <direction> on a <color> background[, <style>]"
std::string prompt_for(const SceneSpec& s);

// Fields named by a prompt; geometry is not part of the grammar.
struct PromptAttrs {
    ColorName shape_color = ColorName::red;
    ShapeKind shape = ShapeKind::square;
    Direction direction = Direction::still;
    ColorName bg_color = ColorName::white;
    StyleKind style = StyleKind::plain;
};

// Inverse of prompt_for; throws usage_error when the text deviates from the
// grammar.
PromptAttrs parse_prompt(const std::string& text);

}  // namespace moca
