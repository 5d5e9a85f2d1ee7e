#ifndef EDNO_FASTMATH_HPP
#define EDNO_FASTMATH_HPP

#include <cmath>

// Polynomial float trig for the polar hot path (a few ulp, branch-light, so
// the loops vectorize). Double stays on libm: the gradient checks difference
// through these functions and need them smooth to machine precision.

namespace edno {

template <typename T>
struct FastTrig {
    static T atan2(T y, T x) { return std::atan2(y, x); }
    static T sin(T x) { return std::sin(x); }
    static T cos(T x) { return std::cos(x); }
};

namespace fastdetail {

// minimax arctan on [0, 1], ~4e-7 max error
inline float atan_unit(float a) {
    const float s = a * a;
    float u = 0.00282363896258175373077393f;
    u = u * s - 0.0159569028764963150024414f;
    u = u * s + 0.0425049886107444763183594f;
    u = u * s - 0.0748900920152664184570312f;
    u = u * s + 0.106347933411598205566406f;
    u = u * s - 0.142027363181114196777344f;
    u = u * s + 0.199926957488059997558594f;
    u = u * s - 0.333331018686294555664062f;
    return a + a * s * u;
}

// minimax sine on [-pi/2, pi/2], ~3 ulp
inline float sin_half(float y) {
    const float s = y * y;
    float u = 2.6083159809786593541503e-06f;
    u = u * s - 0.0001981069071916863322258f;
    u = u * s + 0.00833307858556509017944336f;
    u = u * s - 0.166666597127914428710938f;
    return y + y * s * u;
}

} // namespace fastdetail

template <>
struct FastTrig<float> {
    static float atan2(float y, float x) {
        const float ay = std::fabs(y), ax = std::fabs(x);
        const float hi = ay > ax ? ay : ax;
        const float lo = ay > ax ? ax : ay;
        if (hi == 0.0f) return 0.0f;
        float r = fastdetail::atan_unit(lo / hi);
        if (ay > ax) r = float(M_PI_2) - r;
        if (x < 0.0f) r = float(M_PI) - r;
        return y < 0.0f ? -r : r;
    }

    // valid for |x| <= pi + small slack, which covers every phase here
    static float sin(float x) {
        float y = x;
        if (y > float(M_PI_2)) y = float(M_PI) - y;
        if (y < -float(M_PI_2)) y = -float(M_PI) - y;
        return fastdetail::sin_half(y);
    }

    static float cos(float x) {
        float z = x + float(M_PI_2);
        if (z > float(M_PI)) z = z - 2.0f * float(M_PI);
        return sin(z);
    }
};

} // namespace edno

#endif
