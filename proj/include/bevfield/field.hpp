// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/common.hpp"

#include <array>
#include <span>

namespace bevfield {

struct FieldSample {
    std::array<double, 3> color{}; // each component in [0, 1]
    double sigma = 0.0;            // volume density, >= 0
};

/// Queryable radiance field: (point, direction) -> (color, density).
///
/// Points are passed as `anchor + offset`. Renderers use the ray origin as the
/// anchor, which lets fields that can evaluate relative geometry exactly (the
/// procedural oracle) stay bit-exact under integer scene translations.
/// Implementations must be safe for concurrent const calls.
class RadianceField {
  public:
    virtual ~RadianceField() = default;

    virtual FieldSample query_at(const Vec3 &anchor, const Vec3 &offset, const Vec3 &dir) const = 0;

    FieldSample query(const Vec3 &p, const Vec3 &dir) const { return query_at(p, Vec3{}, dir); }

    /// Samples at anchor + t * dir for every t; `out` has ts.size() entries.
    virtual void query_ray(const Vec3 &anchor, const Vec3 &dir, std::span<const double> ts,
                           std::span<FieldSample> out) const {
        for (std::size_t i = 0; i < ts.size(); ++i) {
            out[i] = query_at(anchor, dir * ts[i], dir);
        }
    }
};

} // namespace bevfield
