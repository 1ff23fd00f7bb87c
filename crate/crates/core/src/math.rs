//! Small fixed-size vector/matrix types and the handful of geometric helpers
//! the renderer needs. Kept local so the whole crate stays generic over the
//! scalar type.

use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn splat(v: T) -> Self {
        Self { x: v, y: v, z: v }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::splat(T::zero())
    }

    #[inline]
    pub fn of(x: f64, y: f64, z: f64) -> Self {
        Self::new(T::of(x), T::of(y), T::of(z))
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm2(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm2().sqrt()
    }

    #[inline]
    pub fn normalized(self) -> Self {
        self / self.norm()
    }

    /// Returns `None` when the norm is below `eps`.
    #[inline]
    pub fn try_normalized(self, eps: T) -> Option<Self> {
        let n = self.norm();
        if n < eps {
            None
        } else {
            Some(self / n)
        }
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    #[inline]
    pub fn mul_elem(self, o: Self) -> Self {
        Self::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    #[inline]
    pub fn min_elem(self) -> T {
        self.x.min(self.y).min(self.z)
    }

    #[inline]
    pub fn max_elem(self) -> T {
        self.x.max(self.y).max(self.z)
    }

    #[inline]
    pub fn sum(self) -> T {
        self.x + self.y + self.z
    }

    #[inline]
    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn axis(self, i: usize) -> T {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(U::of(self.x.as_f64()), U::of(self.y.as_f64()), U::of(self.z.as_f64()))
    }
}

impl<T: Real> std::ops::Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> std::ops::Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> std::ops::Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T: Real> std::ops::Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> std::ops::Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> std::ops::AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// RGB triple; same layout as Vec3 but kept as an alias for readability.
pub type Rgb<T> = Vec3<T>;

/// Reflection of `d` about unit normal `n`: 2(d·n)n − d.
#[inline]
pub fn reflect<T: Real>(d: Vec3<T>, n: Vec3<T>) -> Vec3<T> {
    n * (T::of(2.0) * d.dot(n)) - d
}

/// Row-major 4x4 matrix, used only for camera poses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4<T> {
    pub m: [[T; 4]; 4],
}

impl<T: Real> Mat4<T> {
    pub fn identity() -> Self {
        let mut m = [[T::zero(); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self { m }
    }

    pub fn from_rows(rows: [[T; 4]; 4]) -> Self {
        Self { m: rows }
    }

    /// Rotation block applied to a direction (no translation).
    #[inline]
    pub fn rotate(&self, v: Vec3<T>) -> Vec3<T> {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    #[inline]
    pub fn transform_point(&self, v: Vec3<T>) -> Vec3<T> {
        self.rotate(v) + self.translation()
    }

    #[inline]
    pub fn translation(&self) -> Vec3<T> {
        Vec3::new(self.m[0][3], self.m[1][3], self.m[2][3])
    }

    /// Determinant of the 3x3 rotation block.
    pub fn rot_det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Max deviation of R^T R from identity over the rotation block.
    pub fn rot_orthonormality_error(&self) -> T {
        let m = &self.m;
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut dot = T::zero();
                for k in 0..3 {
                    dot = dot + m[k][i] * m[k][j];
                }
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Axis-aligned box in world units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Self {
        Self { min, max }
    }

    pub fn cube(half: T) -> Self {
        Self::new(Vec3::splat(-half), Vec3::splat(half))
    }

    #[inline]
    pub fn contains(&self, p: Vec3<T>) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    #[inline]
    pub fn extent(&self) -> Vec3<T> {
        self.max - self.min
    }

    /// Slab intersection; returns the clipped `(t_near, t_far)` with
    /// `t_near >= t_min`, or `None` when the ray misses.
    pub fn intersect(&self, origin: Vec3<T>, dir: Vec3<T>, t_min: T, t_max: T) -> Option<(T, T)> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for i in 0..3 {
            let o = origin.axis(i);
            let d = dir.axis(i);
            let (lo, hi) = (self.min.axis(i), self.max.axis(i));
            if d.abs() < T::of(1e-12) {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let inv = T::one() / d;
            let (mut ta, mut tb) = ((lo - o) * inv, (hi - o) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Orthonormal basis completing a unit vector into a right-handed frame
/// (Duff et al. branchless construction).
#[inline]
pub fn onb<T: Real>(n: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let sign = if n.z >= T::zero() { T::one() } else { -T::one() };
    let a = -T::one() / (sign + n.z);
    let b = n.x * n.y * a;
    let t = Vec3::new(T::one() + sign * n.x * n.x * a, sign * b, -sign * n.x);
    let bt = Vec3::new(b, sign + n.y * n.y * a, -n.y);
    (t, bt)
}

/// Unit direction from spherical angles (theta from +z, phi around z).
#[inline]
pub fn spherical_dir<T: Real>(theta: T, phi: T) -> Vec3<T> {
    let st = theta.sin();
    Vec3::new(st * phi.cos(), st * phi.sin(), theta.cos())
}

/// Inverse of [`spherical_dir`]: (theta in [0,pi], phi in [0,2pi)).
#[inline]
pub fn dir_to_spherical<T: Real>(d: Vec3<T>) -> (T, T) {
    let theta = d.z.clamp(-T::one(), T::one()).acos();
    let mut phi = d.y.atan2(d.x);
    if phi < T::zero() {
        phi = phi + T::of(2.0) * T::PI();
    }
    (theta, phi)
}
