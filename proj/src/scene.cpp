#include "lpstream/scene.hpp"

#include "lpstream/error.hpp"

#include <json.hpp>

#include <cmath>
#include <istream>
#include <iterator>

namespace lpstream {

namespace {

constexpr double kParallelEps = 1e-12;

double axis(const Vec3& v, int a) { return a == 0 ? v.x : (a == 1 ? v.y : v.z); }

Vec3 axis_normal(int a, double sign) {
    Vec3 n;
    if (a == 0) n.x = sign;
    if (a == 1) n.y = sign;
    if (a == 2) n.z = sign;
    return n;
}

}  // namespace

std::optional<Hit> intersect(const Ray& ray, const Box& box, double t_max) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    int near_axis = -1, far_axis = -1;
    for (int a = 0; a < 3; ++a) {
        const double o = axis(ray.origin, a);
        const double d = axis(ray.direction, a);
        const double lo = axis(box.min, a);
        const double hi = axis(box.max, a);
        if (std::abs(d) < kParallelEps) {
            if (o < lo || o > hi) return std::nullopt;
            continue;
        }
        double t0 = (lo - o) / d;
        double t1 = (hi - o) / d;
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > t_near) {
            t_near = t0;
            near_axis = a;
        }
        if (t1 < t_far) {
            t_far = t1;
            far_axis = a;
        }
        if (t_near > t_far) return std::nullopt;
    }
    double t;
    int hit_axis;
    if (t_near >= 0.0) {
        t = t_near;
        hit_axis = near_axis;
    } else if (t_far >= 0.0) {
        t = t_far;
        hit_axis = far_axis;
    } else {
        return std::nullopt;
    }
    if (hit_axis < 0 || t > t_max) return std::nullopt;
    const double d = axis(ray.direction, hit_axis);
    return Hit{t, ray.origin + ray.direction * t, axis_normal(hit_axis, d > 0.0 ? -1.0 : 1.0)};
}

std::optional<Hit> intersect(const Ray& ray, const Triangle& tri, double t_max) {
    // Moller-Trumbore
    const Vec3 e1 = tri.v1 - tri.v0;
    const Vec3 e2 = tri.v2 - tri.v0;
    const Vec3 p = cross(ray.direction, e2);
    const double det = dot(e1, p);
    if (std::abs(det) < kParallelEps) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 s = ray.origin - tri.v0;
    const double u = dot(s, p) * inv;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 q = cross(s, e1);
    const double v = dot(ray.direction, q) * inv;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    const double t = dot(e2, q) * inv;
    if (t < 0.0 || t > t_max) return std::nullopt;
    Vec3 n = normalize(cross(e1, e2));
    if (dot(n, ray.direction) > 0.0) n = -n;
    return Hit{t, ray.origin + ray.direction * t, n};
}

std::optional<Hit> SceneGeometry::intersect(const Ray& ray, double t_max) const {
    std::optional<Hit> best;
    double limit = t_max;
    for (const Box& b : boxes_) {
        if (auto h = lpstream::intersect(ray, b, limit); h && (!best || h->t < best->t)) {
            best = h;
            limit = h->t;
        }
    }
    for (const Triangle& tri : triangles_) {
        if (auto h = lpstream::intersect(ray, tri, limit); h && (!best || h->t < best->t)) {
            best = h;
            limit = h->t;
        }
    }
    return best;
}

namespace {

Vec3 read_vec3(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw InvalidArgument("expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json write_vec3(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

}  // namespace

SceneGeometry parse_scene(const std::string& json_text) {
    SceneGeometry scene;
    try {
        const auto doc = nlohmann::json::parse(json_text);
        if (!doc.is_object()) throw InvalidArgument("scene must be a JSON object");
        if (doc.contains("boxes")) {
            for (const auto& b : doc.at("boxes")) {
                Box box{read_vec3(b.at("min")), read_vec3(b.at("max"))};
                if (box.min.x > box.max.x || box.min.y > box.max.y || box.min.z > box.max.z) {
                    throw InvalidArgument("box min exceeds max");
                }
                scene.add_box(box);
            }
        }
        if (doc.contains("triangles")) {
            for (const auto& t : doc.at("triangles")) {
                scene.add_triangle({read_vec3(t.at("v0")), read_vec3(t.at("v1")), read_vec3(t.at("v2"))});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("invalid scene file: ") + e.what());
    }
    return scene;
}

SceneGeometry load_scene(std::istream& in) {
    return parse_scene(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

std::string scene_to_json(const SceneGeometry& scene) {
    nlohmann::json doc;
    doc["boxes"] = nlohmann::json::array();
    for (const Box& b : scene.boxes()) doc["boxes"].push_back({{"min", write_vec3(b.min)}, {"max", write_vec3(b.max)}});
    doc["triangles"] = nlohmann::json::array();
    for (const Triangle& t : scene.triangles()) {
        doc["triangles"].push_back({{"v0", write_vec3(t.v0)}, {"v1", write_vec3(t.v1)}, {"v2", write_vec3(t.v2)}});
    }
    return doc.dump(2);
}

}  // namespace lpstream
