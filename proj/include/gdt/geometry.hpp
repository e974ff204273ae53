#pragma once

#include <algorithm>
#include <cmath>

namespace gdt {

// Axis-aligned box in continuous pixel coordinates. (x, y) is the top-left
// corner; the box covers [x, x+w) x [y, y+h). Coordinates are 0-based
// internally; the 1-based file conventions are converted at the I/O boundary.
struct BoundingBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    double right() const { return x + w; }
    double bottom() const { return y + h; }
    double area() const { return w * h; }
    double diagonal() const { return std::sqrt(w * w + h * h); }
    double aspect() const { return w / h; }
    bool valid() const { return w > 0.0 && h > 0.0; }

    bool operator==(const BoundingBox&) const = default;
};

inline double iou(const BoundingBox& a, const BoundingBox& b) {
    if (a == b) return 1.0; // identical regions, exactly
    const double ix = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    const double iy = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

inline double center_distance(const BoundingBox& a, const BoundingBox& b) {
    const double dx = a.cx() - b.cx();
    const double dy = a.cy() - b.cy();
    return std::sqrt(dx * dx + dy * dy);
}

} // namespace gdt
