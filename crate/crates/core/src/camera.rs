//! Pinhole camera with the NeRF-blender pose convention: camera-to-world
//! transform, camera space looks along -z with +x right and +y up.

use crate::math::{Mat4, Vec3};
use crate::num::Real;

#[derive(Clone, Copy, Debug)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    /// Unit direction.
    pub dir: Vec3<T>,
    pub pixel: (usize, usize),
    /// Index of the capture lighting condition.
    pub light: usize,
}

#[derive(Clone, Debug)]
pub struct Camera<T> {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub focal: T,
    pub c2w: Mat4<T>,
    pub light: usize,
}

impl<T: Real> Camera<T> {
    pub fn new(width: usize, height: usize, focal: T, c2w: Mat4<T>, light: usize) -> crate::Result<Self> {
        if c2w.rot_det().abs() < T::of(1e-8) {
            return Err(crate::Error::Config("degenerate camera pose (singular rotation)".into()));
        }
        Ok(Self { width, height, focal, c2w, light })
    }

    /// Focal from the horizontal field of view (`camera_angle_x`).
    pub fn focal_from_angle_x(width: usize, angle_x: T) -> T {
        T::of(0.5) * T::of_usize(width) / (T::of(0.5) * angle_x).tan()
    }

    /// World-space ray through the center of pixel (row, col).
    pub fn ray(&self, row: usize, col: usize) -> Ray<T> {
        debug_assert!(row < self.height && col < self.width);
        let half = T::of(0.5);
        let x = (T::of_usize(col) + half - T::of_usize(self.width) * half) / self.focal;
        let y = -(T::of_usize(row) + half - T::of_usize(self.height) * half) / self.focal;
        let dir_cam = Vec3::new(x, y, -T::one());
        let dir = self.c2w.rotate(dir_cam).normalized();
        Ray { origin: self.c2w.translation(), dir, pixel: (row, col), light: self.light }
    }

    pub fn rays_for_pixels(&self, pixels: &[(usize, usize)]) -> Vec<Ray<T>> {
        pixels.iter().map(|&(r, c)| self.ray(r, c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam(w: usize, h: usize) -> Camera<f64> {
        Camera::new(w, h, 50.0, Mat4::identity(), 0).unwrap()
    }

    #[test]
    fn principal_pixel_looks_down_minus_z() {
        // even-sized image: the principal point sits between pixels, so use
        // the symmetric pair and the odd-sized center
        let cam = identity_cam(101, 101);
        let r = cam.ray(50, 50);
        assert!((r.dir - Vec3::of(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert_eq!(r.origin, Vec3::of(0.0, 0.0, 0.0));
    }

    #[test]
    fn center_symmetry() {
        let cam = identity_cam(64, 64);
        let a = cam.ray(10, 10).dir;
        let b = cam.ray(53, 53).dir;
        // mirrored about the optical axis
        assert!((a.x + b.x).abs() < 1e-12 && (a.y + b.y).abs() < 1e-12);
        assert!((a.z - b.z).abs() < 1e-12);
    }

    #[test]
    fn corner_matches_inverse_projection_oracle() {
        // independent oracle: unproject via an explicit 3x3 matrix inverse of
        // K = [[f,0,cx],[0,-f,cy],[0,0,-1]] applied to the homogeneous pixel
        let (w, h, f) = (64usize, 48usize, 37.5f64);
        let cam = identity_cam(64, 48);
        let cam = Camera { width: w, height: h, focal: f, ..cam };
        // projection with homogeneous divide by -z: [u,v,1] ~ K [x,y,z]
        let k = [[f, 0.0, -(w as f64) / 2.0], [0.0, -f, -(h as f64) / 2.0], [0.0, 0.0, -1.0]];
        let kinv = inv3(&k);
        for &(row, col) in &[(0usize, 0usize), (0, 63), (47, 0), (47, 63), (13, 40)] {
            let hom = [col as f64 + 0.5, row as f64 + 0.5, 1.0];
            let mut d = [0.0; 3];
            for i in 0..3 {
                for j in 0..3 {
                    d[i] += kinv[i][j] * hom[j];
                }
            }
            let oracle = Vec3::of(d[0], d[1], d[2]).normalized();
            let got = cam.ray(row, col).dir;
            assert!((got - oracle).norm() < 1e-12, "pixel ({row},{col}): {got:?} vs {oracle:?}");
        }
    }

    #[test]
    fn degenerate_pose_rejected() {
        let mut m = Mat4::<f64>::identity();
        m.m[0][0] = 0.0;
        m.m[1][1] = 0.0;
        m.m[2][2] = 0.0;
        assert!(Camera::new(8, 8, 10.0, m, 0).is_err());
    }

    fn inv3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mut inv = [[0.0; 3]; 3];
        inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
        inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
        inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
        inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
        inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
        inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
        inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
        inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
        inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
        inv
    }
}
