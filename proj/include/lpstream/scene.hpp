#pragma once

// Minimal ray-queryable scene: axis-aligned boxes and triangles.
//
// Scene file schema (JSON):
//   {
//     "boxes":     [ { "min": [x, y, z], "max": [x, y, z] }, ... ],
//     "triangles": [ { "v0": [x, y, z], "v1": [...], "v2": [...] }, ... ]
//   }
// Both arrays are optional. Units are meters.

#include "lpstream/vec3.hpp"

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace lpstream {

struct Ray {
    Vec3 origin;
    Vec3 direction;  ///< unit length
};

struct Hit {
    double t = 0.0;
    Vec3 point;
    Vec3 normal;  ///< unit, facing against the ray
};

struct Box {
    Vec3 min;
    Vec3 max;
};

struct Triangle {
    Vec3 v0, v1, v2;
};

/// Intersection against a box treated as a closed shell: a ray starting inside
/// hits the inner wall it exits through.
std::optional<Hit> intersect(const Ray& ray, const Box& box, double t_max = std::numeric_limits<double>::infinity());
std::optional<Hit> intersect(const Ray& ray, const Triangle& tri, double t_max = std::numeric_limits<double>::infinity());

class SceneGeometry {
public:
    void add_box(const Box& box) { boxes_.push_back(box); }
    void add_triangle(const Triangle& tri) { triangles_.push_back(tri); }

    const std::vector<Box>& boxes() const { return boxes_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    bool empty() const { return boxes_.empty() && triangles_.empty(); }

    /// Nearest hit with t >= 0, if any.
    std::optional<Hit> intersect(const Ray& ray, double t_max = std::numeric_limits<double>::infinity()) const;

private:
    std::vector<Box> boxes_;
    std::vector<Triangle> triangles_;
};

SceneGeometry parse_scene(const std::string& json_text);
SceneGeometry load_scene(std::istream& in);
std::string scene_to_json(const SceneGeometry& scene);

}  // namespace lpstream
