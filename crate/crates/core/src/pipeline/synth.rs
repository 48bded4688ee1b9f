//! Procedural shape pairs: analytic base meshes plus smooth deformations
//! with identity ground truth.

use rand::Rng;
use thiserror::Error;

use crate::hiergraph::Correspondence;
use crate::mesh::vec3;
use crate::mesh::{normalize_to_unit_ball, MeshError, Point3, TriangleMesh};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("resolution {0}x{1} yields {2} vertices; at least {MIN_VERTICES} required")]
    TooCoarse(usize, usize, usize),
    #[error("bend angle {0} exceeds pi; the bent tube would self-intersect")]
    BendTooLarge(f64),
    #[error("twist rate {0} exceeds 2*pi per unit height")]
    TwistTooLarge(f64),
    #[error("mesh error: {0}")]
    Mesh(#[from] MeshError),
}

/// Minimum vertex count produced by [`generate_synthetic_pair`].
pub const MIN_VERTICES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseShape {
    Cylinder,
    Sphere,
    Bar,
}

impl BaseShape {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cylinder" => Some(Self::Cylinder),
            "sphere" => Some(Self::Sphere),
            "bar" => Some(Self::Bar),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cylinder => "cylinder",
            Self::Sphere => "sphere",
            Self::Bar => "bar",
        }
    }
}

/// Smooth analytic deformation parameters. Applied in the order twist,
/// bend, bump.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeformParams {
    /// Total bend of the axis in radians, realized as a circular arc.
    pub bend_angle: f64,
    /// Rotation about the axis in radians per unit height.
    pub twist_rate: f64,
    /// Height of a Gaussian radial bump centered at a random vertex.
    pub bump_amplitude: f64,
}

/// Generation record attached to synthetic pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthProvenance {
    pub base: BaseShape,
    pub deformation: DeformParams,
}

/// A mesh pair with shared topology and known ground truth. `provenance`
/// carries the deformation parameters when the pair was generated here
/// rather than loaded from files.
#[derive(Debug, Clone)]
pub struct ShapePairSample {
    pub mesh_a: TriangleMesh,
    pub mesh_b: TriangleMesh,
    pub correspondence: Correspondence,
    pub provenance: Option<SynthProvenance>,
}

const TUBE_RADIUS: f64 = 0.3;
const TUBE_HEIGHT: f64 = 1.0;
const BUMP_WIDTH: f64 = 0.2;

/// Un-normalized base mesh. `resolution = (around, along)`: segments around
/// the profile and along the axis (or rings for the sphere).
pub fn base_mesh(shape: BaseShape, resolution: (usize, usize)) -> TriangleMesh {
    match shape {
        BaseShape::Cylinder => tube(resolution.0, resolution.1, circle_profile),
        BaseShape::Bar => tube(resolution.0, resolution.1, square_profile),
        BaseShape::Sphere => uv_sphere(resolution.0, resolution.1),
    }
}

fn circle_profile(t: f64) -> (f64, f64) {
    let a = 2.0 * std::f64::consts::PI * t;
    (TUBE_RADIUS * a.cos(), TUBE_RADIUS * a.sin())
}

/// Axis-aligned square perimeter of half-width `TUBE_RADIUS`, parameterized
/// by arc length.
fn square_profile(t: f64) -> (f64, f64) {
    let s = 4.0 * t; // one unit per side
    let h = TUBE_RADIUS;
    let seg = s.floor() as usize % 4;
    let f = s - s.floor();
    match seg {
        0 => (h, -h + 2.0 * h * f),
        1 => (h - 2.0 * h * f, h),
        2 => (-h, h - 2.0 * h * f),
        _ => (-h + 2.0 * h * f, -h),
    }
}

fn tube(around: usize, along: usize, profile: fn(f64) -> (f64, f64)) -> TriangleMesh {
    assert!(around >= 3 && along >= 1, "tube resolution too small");
    let mut vertices = Vec::with_capacity(around * (along + 1));
    for j in 0..=along {
        let z = TUBE_HEIGHT * j as f64 / along as f64;
        for k in 0..around {
            let (x, y) = profile(k as f64 / around as f64);
            vertices.push([x, y, z]);
        }
    }
    let mut faces = Vec::with_capacity(2 * around * along);
    for j in 0..along {
        for k in 0..around {
            let a = j * around + k;
            let b = j * around + (k + 1) % around;
            let c = a + around;
            let d = b + around;
            faces.push([a, b, c]);
            faces.push([b, d, c]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("tube indices are in range")
}

fn uv_sphere(segments: usize, rings: usize) -> TriangleMesh {
    assert!(segments >= 3 && rings >= 3, "sphere resolution too small");
    let r = 0.5;
    let mut vertices: Vec<Point3> = vec![[0.0, 0.0, -r]];
    for j in 1..rings {
        let polar = std::f64::consts::PI * (j as f64 / rings as f64 - 0.5);
        let (rz, rr) = (r * polar.sin(), r * polar.cos());
        for k in 0..segments {
            let a = 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
            vertices.push([rr * a.cos(), rr * a.sin(), rz]);
        }
    }
    vertices.push([0.0, 0.0, r]);
    let top = vertices.len() - 1;
    let ring = |j: usize, k: usize| 1 + (j - 1) * segments + k % segments;

    let mut faces = Vec::new();
    for k in 0..segments {
        faces.push([0, ring(1, k + 1), ring(1, k)]);
    }
    for j in 1..rings - 1 {
        for k in 0..segments {
            let (a, b) = (ring(j, k), ring(j, k + 1));
            let (c, d) = (ring(j + 1, k), ring(j + 1, k + 1));
            faces.push([a, b, c]);
            faces.push([b, d, c]);
        }
    }
    for k in 0..segments {
        faces.push([top, ring(rings - 1, k), ring(rings - 1, k + 1)]);
    }
    TriangleMesh::new(vertices, faces).expect("sphere indices are in range")
}

/// Rotation about the z axis proportional to height.
pub fn twist_point(p: Point3, rate: f64) -> Point3 {
    let a = rate * p[2];
    let (s, c) = a.sin_cos();
    [p[0] * c - p[1] * s, p[0] * s + p[1] * c, p[2]]
}

/// Map the `[0, height]` axis segment onto a circular arc of total angle
/// `angle`, carrying cross-sections rigidly. The arc radius is
/// `height / angle`; an axis point `(0, 0, z)` lands on
/// `(R (1 - cos phi), 0, R sin phi)` with `phi = angle * z / height`.
pub fn bend_point(p: Point3, angle: f64, height: f64) -> Point3 {
    if angle.abs() < 1e-12 {
        return p;
    }
    let radius = height / angle;
    let phi = angle * p[2] / height;
    let (s, c) = phi.sin_cos();
    [radius - (radius - p[0]) * c, p[1], (radius - p[0]) * s]
}

fn radial_direction(shape: BaseShape, p: Point3) -> Point3 {
    let dir = match shape {
        BaseShape::Sphere => p,
        BaseShape::Cylinder | BaseShape::Bar => [p[0], p[1], 0.0],
    };
    let n = vec3::norm(dir);
    if n == 0.0 {
        [0.0, 0.0, 1.0]
    } else {
        vec3::scale(dir, 1.0 / n)
    }
}

/// Build a deformed copy of a base mesh. The correspondence is the identity
/// by construction and both meshes are normalized to the unit ball.
pub fn generate_synthetic_pair(
    base: BaseShape,
    resolution: (usize, usize),
    deformation: DeformParams,
    rng: &mut impl Rng,
) -> Result<ShapePairSample, SynthError> {
    if deformation.bend_angle.abs() > std::f64::consts::PI {
        return Err(SynthError::BendTooLarge(deformation.bend_angle));
    }
    if deformation.twist_rate.abs() > 2.0 * std::f64::consts::PI {
        return Err(SynthError::TwistTooLarge(deformation.twist_rate));
    }
    let raw = base_mesh(base, resolution);
    if raw.vertices.len() < MIN_VERTICES {
        return Err(SynthError::TooCoarse(resolution.0, resolution.1, raw.vertices.len()));
    }

    let mut deformed = raw.vertices.clone();
    if deformation.twist_rate != 0.0 {
        for p in &mut deformed {
            *p = twist_point(*p, deformation.twist_rate);
        }
    }
    if deformation.bend_angle != 0.0 {
        for p in &mut deformed {
            *p = bend_point(*p, deformation.bend_angle, TUBE_HEIGHT);
        }
    }
    if deformation.bump_amplitude != 0.0 {
        let center = raw.vertices[rng.random_range(0..raw.vertices.len())];
        for (p, orig) in deformed.iter_mut().zip(&raw.vertices) {
            let d = vec3::dist(*orig, center);
            let falloff = (-d * d / (2.0 * BUMP_WIDTH * BUMP_WIDTH)).exp();
            let dir = radial_direction(base, *orig);
            *p = vec3::add(*p, vec3::scale(dir, deformation.bump_amplitude * falloff));
        }
    }

    let mesh_a = normalize_to_unit_ball(&raw)?;
    let mesh_b = normalize_to_unit_ball(&TriangleMesh { vertices: deformed, faces: raw.faces })?;
    Ok(ShapePairSample {
        mesh_a,
        mesh_b,
        correspondence: Correspondence::Identity,
        provenance: Some(SynthProvenance { base, deformation }),
    })
}
