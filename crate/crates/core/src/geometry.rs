//! Pinhole cameras, homographies and the guidance box.
//!
//! Camera convention: `p_cam = R * p_world + t`, x right, y down, z forward.
//! Pixel coordinates put pixel centers on integers.
//!
//! A *camera motion* is a rotation expressed in the current camera frame.
//! Applying motion `M` to a pose gives `R' = Mᵀ R`; a positive rotation about
//! the camera y axis turns the view right (pan right), about x tilts it up and
//! about z rolls it clockwise as seen from behind the camera.

use nalgebra::{DMatrix, Matrix3, Point2, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Frame;

pub type Pixel = Point2<f64>;
pub type Point3 = nalgebra::Point3<f64>;

/// Depth below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;
/// Homogeneous `w` below which a mapped point is at infinity.
pub const MIN_W: f64 = 1e-12;
/// Frobenius residual above which `K⁻¹HK` is not treated as a rotation.
pub const DEFAULT_NOT_ROTATIONAL_RESIDUAL: f64 = 0.1;
/// Tolerance for orthonormality and `det = +1` of pose rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("matrix is not a proper rotation (orthonormality error {error:e})")]
    InvalidRotation { error: f64 },
    #[error("homography is singular")]
    SingularHomography,
    #[error("need at least 4 correspondences, got {0}")]
    InsufficientPoints(usize),
    #[error("degenerate correspondence configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("mapped point is at infinity (w = {w:e})")]
    PointAtInfinity { w: f64 },
    #[error("quad has zero area")]
    DegenerateQuad,
    #[error("quad is not an axis-aligned rectangle")]
    NotAxisAligned,
    #[error("homography is not rotational (residual {residual:.4})")]
    NotRotational { residual: f64 },
    #[error("non-finite coordinate")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at the image center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidIntrinsics("cx outside image"));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics("cy outside image"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Unit-depth ray through a pixel, in camera coordinates.
    pub fn back_project(&self, p: &Pixel) -> Vector3<f64> {
        Vector3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, p: &Pixel) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 - 1.0 && p.y <= self.height as f64 - 1.0
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

/// Rigid world→camera transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Result<Self> {
        Self::new(rotation, Vector3::zeros())
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Pose with the same center, turned by a camera-frame motion.
    pub fn turned(&self, motion: &Matrix3<f64>) -> CameraPose {
        let rotation = motion.transpose() * self.rotation;
        let center = self.center();
        CameraPose {
            rotation,
            translation: -(rotation * center),
        }
    }

    pub fn to_camera(&self, p: &Point3) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    /// Rotation taking this camera's frame to `other`'s: `R_other Rᵀ`.
    pub fn rotation_to(&self, other: &CameraPose) -> Matrix3<f64> {
        other.rotation * self.rotation.transpose()
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    let error = ortho.max(det);
    if error > ROTATION_TOLERANCE {
        return Err(GeometryError::InvalidRotation { error });
    }
    Ok(())
}

/// Camera-frame motion from yaw (pan right), pitch (tilt up) and roll
/// (clockwise), in degrees: `Ry(yaw) · Rx(pitch) · Rz(roll)`.
pub fn camera_motion(yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Matrix3<f64> {
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw_deg.to_radians());
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), pitch_deg.to_radians());
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), roll_deg.to_radians());
    (ry * rx * rz).into_inner()
}

/// Camera-frame motion from a rotation vector given in degrees.
pub fn motion_from_rotation_vector(omega_deg: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(omega_deg.map(f64::to_radians)).into_inner()
}

/// Rotation vector (axis · angle) of a rotation matrix, in degrees.
pub fn rotation_vector_deg(r: &Matrix3<f64>) -> Vector3<f64> {
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let angle = geodesic_angle(r);
    if angle < 1e-7 {
        // first-order: skew/2 ≈ ω
        return (skew / 2.0).map(f64::to_degrees);
    }
    if angle > std::f64::consts::PI - 1e-6 {
        let rot = Rotation3::from_matrix_unchecked(*r);
        return rot.scaled_axis().map(f64::to_degrees);
    }
    let axis = skew / (2.0 * angle.sin());
    (axis * angle).map(f64::to_degrees)
}

/// Geodesic angle of a rotation matrix, in radians.
///
/// `atan2(|vee(R - Rᵀ)|/2, (tr R - 1)/2)` keeps full precision near 0 and π,
/// where `acos` of the trace alone loses half the digits.
pub fn geodesic_angle(r: &Matrix3<f64>) -> f64 {
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let sin = skew.norm() / 2.0;
    let cos = (r.trace() - 1.0) / 2.0;
    sin.atan2(cos)
}

pub fn geodesic_angle_deg(r: &Matrix3<f64>) -> f64 {
    geodesic_angle(r).to_degrees()
}

/// Projective map of the plane, normalized so `h33 = 1` (or, when `h33`
/// is nearly zero, unit Frobenius norm with a non-negative leading entry).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix3<f64>", into = "Matrix3<f64>")]
pub struct Homography(Matrix3<f64>);

impl TryFrom<Matrix3<f64>> for Homography {
    type Error = GeometryError;
    fn try_from(m: Matrix3<f64>) -> Result<Self> {
        Homography::new(m)
    }
}

impl From<Homography> for Matrix3<f64> {
    fn from(h: Homography) -> Self {
        h.0
    }
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let m = normalize_homography(m).ok_or(GeometryError::SingularHomography)?;
        if m.determinant().abs() <= 1e-12 {
            return Err(GeometryError::SingularHomography);
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Homography {
        let inv = self.0.try_inverse().expect("non-singular by construction");
        Homography::new(inv).expect("inverse of a non-singular homography")
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::new(self.0 * other.0)
    }

    pub fn apply(&self, p: &Pixel) -> Result<Pixel> {
        apply_homography(self, p)
    }

    pub fn apply_quad(&self, q: &Quad) -> Result<Quad> {
        apply_homography_quad(self, q)
    }
}

fn normalize_homography(m: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let h33 = m[(2, 2)];
    if h33.abs() > 1e-9 {
        return Some(m / h33);
    }
    let norm = m.norm();
    if norm == 0.0 {
        return None;
    }
    let mut out = m / norm;
    let lead = out.iter().copied().find(|v| v.abs() > 1e-15).unwrap_or(1.0);
    if lead < 0.0 {
        out = -out;
    }
    Some(out)
}

/// Four corners, clockwise in image coordinates starting top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub corners: [Pixel; 4],
}

impl Quad {
    pub fn new(corners: [Pixel; 4]) -> Result<Self> {
        if corners.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self { corners })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            corners: [
                Pixel::new(x0, y0),
                Pixel::new(x1, y0),
                Pixel::new(x1, y1),
                Pixel::new(x0, y1),
            ],
        }
    }

    /// Signed shoelace area; positive for clockwise order with y down.
    pub fn signed_area(&self) -> f64 {
        let c = &self.corners;
        let mut s = 0.0;
        for i in 0..4 {
            let a = c[i];
            let b = c[(i + 1) % 4];
            s += a.x * b.y - b.x * a.y;
        }
        s / 2.0
    }

    pub fn is_axis_aligned(&self) -> bool {
        let [tl, tr, br, bl] = self.corners;
        tl.y == tr.y && bl.y == br.y && tl.x == bl.x && tr.x == br.x && tl.x < tr.x && tl.y < bl.y
    }

    /// Interior angle at each corner, in degrees.
    pub fn interior_angles_deg(&self) -> [f64; 4] {
        let c = &self.corners;
        std::array::from_fn(|i| {
            let prev = c[(i + 3) % 4] - c[i];
            let next = c[(i + 1) % 4] - c[i];
            let cross = prev.x * next.y - prev.y * next.x;
            let dot = prev.dot(&next);
            cross.abs().atan2(dot).to_degrees()
        })
    }
}

/// Pinhole projection of a world point.
pub fn project(k: &CameraIntrinsics, pose: &CameraPose, p: &Point3) -> Result<Pixel> {
    let pc = pose.to_camera(p);
    project_camera_point(k, &pc)
}

pub fn project_camera_point(k: &CameraIntrinsics, pc: &Vector3<f64>) -> Result<Pixel> {
    if pc.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { depth: pc.z });
    }
    Ok(Pixel::new(
        k.fx * pc.x / pc.z + k.cx,
        k.fy * pc.y / pc.z + k.cy,
    ))
}

/// `K · R_rel · K⁻¹`: maps pixels of a view to pixels of the same camera after
/// a pure rotation `R_rel` (camera-frame change `R_new = R_rel · R_old`).
pub fn homography_pure_rotation(k: &CameraIntrinsics, r_rel: &Matrix3<f64>) -> Result<Homography> {
    check_rotation(r_rel)?;
    if *r_rel == Matrix3::identity() {
        return Ok(Homography::identity());
    }
    Homography::new(k.matrix() * r_rel * k.inverse_matrix())
}

pub fn apply_homography(h: &Homography, p: &Pixel) -> Result<Pixel> {
    let m = h.matrix();
    let x = m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)];
    let y = m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)];
    let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
    if w.abs() < MIN_W {
        return Err(GeometryError::PointAtInfinity { w });
    }
    Ok(Pixel::new(x / w, y / w))
}

pub fn apply_homography_quad(h: &Homography, q: &Quad) -> Result<Quad> {
    let mut corners = [Pixel::origin(); 4];
    for (out, c) in corners.iter_mut().zip(q.corners.iter()) {
        *out = apply_homography(h, c)?;
    }
    Ok(Quad { corners })
}

/// Hartley conditioning: centroid to origin, mean distance √2.
fn hartley(points: &[Pixel]) -> (Vec<Pixel>, Matrix3<f64>) {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| (p.x - cx).hypot(p.y - cy))
        .sum::<f64>()
        / n;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = points
        .iter()
        .map(|p| Pixel::new(s * (p.x - cx), s * (p.y - cy)))
        .collect();
    (out, t)
}

const COLLINEAR_EPS: f64 = 1e-9;

fn collinear(a: &Pixel, b: &Pixel, c: &Pixel) -> bool {
    let u = b - a;
    let v = c - a;
    (u.x * v.y - u.y * v.x).abs() < COLLINEAR_EPS
}

fn all_collinear(pts: &[Pixel]) -> bool {
    // find the farthest pair from the first point, then test everything against that line
    let a = pts[0];
    let Some(b) = pts
        .iter()
        .copied()
        .max_by(|p, q| (p - a).norm().total_cmp(&(q - a).norm()))
    else {
        return true;
    };
    if (b - a).norm() < COLLINEAR_EPS {
        return true;
    }
    pts.iter().all(|c| collinear(&a, &b, c))
}

fn any_triple_collinear(pts: &[Pixel]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if collinear(&pts[i], &pts[j], &pts[k]) {
                    return true;
                }
            }
        }
    }
    false
}

/// Direct linear transform with Hartley normalization.
///
/// Solves the stacked `2n × 9` system for the right singular vector of the
/// smallest singular value. Returned `H` maps `pairs[i].0` to `pairs[i].1`.
pub fn estimate_homography_dlt(pairs: &[(Pixel, Pixel)]) -> Result<Homography> {
    let n = pairs.len();
    if n < 4 {
        return Err(GeometryError::InsufficientPoints(n));
    }
    let src: Vec<Pixel> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Pixel> = pairs.iter().map(|p| p.1).collect();
    if src.iter().chain(dst.iter()).any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let (ns, ts) = hartley(&src);
    let (nd, td) = hartley(&dst);
    if all_collinear(&ns) || all_collinear(&nd) {
        return Err(GeometryError::DegenerateConfiguration("points are collinear or coincident"));
    }
    if n == 4 && (any_triple_collinear(&ns) || any_triple_collinear(&nd)) {
        return Err(GeometryError::DegenerateConfiguration("three of four points are collinear"));
    }

    // pad with zero rows so the SVD always yields a full 9x9 V
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (s, d)) in ns.iter().zip(nd.iter()).enumerate() {
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let s_max = svd.singular_values[order[order.len() - 1]];
    let s_second = svd.singular_values[order[1]];
    if s_second <= 1e-10 * s_max {
        return Err(GeometryError::DegenerateConfiguration("solution is not unique"));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(GeometryError::SingularHomography)?;
    Homography::new(td_inv * hn * ts).map_err(|e| match e {
        GeometryError::SingularHomography => {
            GeometryError::DegenerateConfiguration("estimated homography is singular")
        }
        other => other,
    })
}

/// Inverse-mapped bilinear resampling of `img` through `h` (source→output).
pub fn warp_image(img: &Frame, h: &Homography, out_width: u32, out_height: u32, fill: [u8; 3]) -> Frame {
    const EDGE_EPS: f64 = 1e-9;
    let inv = h.inverse();
    let m = *inv.matrix();
    let (w, hgt) = (img.width() as usize, img.height() as usize);
    let max_x = w as f64 - 1.0;
    let max_y = hgt as f64 - 1.0;
    let src = img.pixels();
    Frame::from_fn(out_width, out_height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let wz = m[(2, 0)] * xf + m[(2, 1)] * yf + m[(2, 2)];
        if wz.abs() < MIN_W {
            return fill;
        }
        let sx = (m[(0, 0)] * xf + m[(0, 1)] * yf + m[(0, 2)]) / wz;
        let sy = (m[(1, 0)] * xf + m[(1, 1)] * yf + m[(1, 2)]) / wz;
        if !(sx >= -EDGE_EPS && sy >= -EDGE_EPS && sx <= max_x + EDGE_EPS && sy <= max_y + EDGE_EPS) {
            return fill;
        }
        let sx = sx.clamp(0.0, max_x);
        let sy = sy.clamp(0.0, max_y);
        let x0 = sx.floor() as usize;
        let y0 = sy.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(hgt - 1);
        let fx = sx - x0 as f64;
        let fy = sy - y0 as f64;
        let at = |xx: usize, yy: usize, c: usize| src[(yy * w + xx) * 3 + c] as f64;
        std::array::from_fn(|c| {
            let top = at(x0, y0, c) + (at(x1, y0, c) - at(x0, y0, c)) * fx;
            let bottom = at(x0, y1, c) + (at(x1, y1, c) - at(x0, y1, c)) * fx;
            let v = top + (bottom - top) * fy;
            (v + 0.5).floor().clamp(0.0, 255.0) as u8
        })
    })
}

/// Warp the optimal-view rectangle into the current view.
pub fn guidance_box(optimal_rect: &Quad, h_cur_from_opt: &Homography) -> Result<Quad> {
    if !optimal_rect.is_axis_aligned() {
        return Err(GeometryError::NotAxisAligned);
    }
    apply_homography_quad(h_cur_from_opt, optimal_rect)
}

/// Draw the outline of `q` onto `img`, clipping to the frame.
pub fn draw_quad(img: &mut Frame, q: &Quad, color: [u8; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for i in 0..4 {
        let (a, b) = (q.corners[i], q.corners[(i + 1) % 4]);
        let steps = (b - a).abs().max().ceil().clamp(1.0, 1e5) as usize;
        for s in 0..=steps {
            let p = a + (b - a) * (s as f64 / steps as f64);
            let (x, y) = (p.x.round() as i64, p.y.round() as i64);
            if (0..w).contains(&x) && (0..h).contains(&y) {
                img.set(x as u32, y as u32, color);
            }
        }
    }
}

/// `1 − Σ|angleᵢ − 90°| / 360°`, clamped to `[0, 1]`.
pub fn rectangularity(q: &Quad) -> Result<f64> {
    let area = q.signed_area().abs();
    if area <= 1e-12 || !area.is_finite() {
        return Err(GeometryError::DegenerateQuad);
    }
    let dev: f64 = q.interior_angles_deg().iter().map(|a| (a - 90.0).abs()).sum();
    Ok((1.0 - dev / 360.0).clamp(0.0, 1.0))
}

/// Nearest rotation (orthogonal Procrustes) and the scale-normalized matrix.
fn procrustes(m: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let d = (u * v_t).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    (u * fix * v_t, *m)
}

/// Rotation implied by a homography under `K`, or `NotRotational`.
pub fn rotation_from_homography(
    k: &CameraIntrinsics,
    h: &Homography,
    max_residual: f64,
) -> Result<Matrix3<f64>> {
    if *h == Homography::identity() {
        return Ok(Matrix3::identity());
    }
    let m = k.inverse_matrix() * h.matrix() * k.matrix();
    let det = m.determinant();
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(GeometryError::NotRotational {
            residual: f64::INFINITY,
        });
    }
    let m = m / det.cbrt();
    let (r, m) = procrustes(&m);
    let residual = (m - r).norm();
    if residual > max_residual {
        return Err(GeometryError::NotRotational { residual });
    }
    Ok(r)
}

/// Rotation angle (degrees) of a rotation-only homography.
pub fn rotation_angle_from_homography(k: &CameraIntrinsics, h: &Homography) -> Result<f64> {
    rotation_angle_from_homography_with(k, h, DEFAULT_NOT_ROTATIONAL_RESIDUAL)
}

pub fn rotation_angle_from_homography_with(
    k: &CameraIntrinsics,
    h: &Homography,
    max_residual: f64,
) -> Result<f64> {
    let r = rotation_from_homography(k, h, max_residual)?;
    Ok(geodesic_angle_deg(&r))
}

/// Isotropic focal-scale factor of a homography in the principal-point frame.
///
/// For a pure zoom `K⁻¹HK ∝ diag(s, s, 1)` this returns `s`; for a pure
/// rotation it returns 1 (the upper-left minor of a rotation equals `R₃₃`).
pub fn focal_scale_from_homography(k: &CameraIntrinsics, h: &Homography) -> f64 {
    let m = k.inverse_matrix() * h.matrix() * k.matrix();
    let minor = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let det = m.determinant();
    let m33 = m[(2, 2)];
    if m33.abs() < 1e-12 || det.abs() < 1e-300 {
        return 1.0;
    }
    // (minor / m33) / cbrt(det) = s^(4/3) for the zoom model
    let ratio = (minor / m33) / det.cbrt();
    ratio.abs().powf(0.75)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    #[test]
    fn project_examples() {
        let k = k100();
        let pose = CameraPose::identity();
        assert_eq!(project(&k, &pose, &Point3::new(0.0, 0.0, 1.0)).unwrap(), Pixel::new(50.0, 50.0));
        assert_eq!(project(&k, &pose, &Point3::new(1.0, 0.0, 1.0)).unwrap(), Pixel::new(150.0, 50.0));
        assert!(matches!(
            project(&k, &pose, &Point3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.9, 0.0, 4, 4).is_ok());
    }

    #[test]
    fn pose_rejects_non_rotation() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(CameraPose::from_rotation(m), Err(GeometryError::InvalidRotation { .. })));
    }

    #[test]
    fn pure_rotation_identity() {
        let h = homography_pure_rotation(&k100(), &Matrix3::identity()).unwrap();
        assert_eq!(h, Homography::identity());
    }

    #[test]
    fn pure_rotation_matches_direct_projection() {
        let k = CameraIntrinsics::centered(300.0, 640, 480).unwrap();
        let pose1 = CameraPose::identity();
        let pose2 = pose1.turned(&camera_motion(10.0, 0.0, 0.0));
        let h = homography_pure_rotation(&k, &pose1.rotation_to(&pose2)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        while checked < 20 {
            let p = Point3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0);
            let (Ok(a), Ok(b)) = (project(&k, &pose1, &p), project(&k, &pose2, &p)) else {
                continue;
            };
            let mapped = apply_homography(&h, &a).unwrap();
            worst = worst.max((mapped - b).norm());
            checked += 1;
        }
        assert!(worst < 1e-9, "max reprojection error {worst}");
    }

    #[test]
    fn pure_rotation_is_a_homomorphism() {
        let k = CameraIntrinsics::centered(250.0, 320, 240).unwrap();
        let r1 = camera_motion(7.0, -3.0, 2.0);
        let r2 = camera_motion(-4.0, 5.0, 11.0);
        let h1 = homography_pure_rotation(&k, &r1).unwrap();
        let h2 = homography_pure_rotation(&k, &r2).unwrap();
        let h21 = homography_pure_rotation(&k, &(r2 * r1)).unwrap();
        let composed = h2.compose(&h1).unwrap();
        assert!((composed.matrix() - h21.matrix()).abs().max() < 1e-9);
    }

    #[test]
    fn dlt_self_correspondences_give_identity() {
        let pts = [
            Pixel::new(0.0, 0.0),
            Pixel::new(100.0, 0.0),
            Pixel::new(100.0, 80.0),
            Pixel::new(0.0, 80.0),
        ];
        let pairs: Vec<_> = pts.iter().map(|p| (*p, *p)).collect();
        let h = estimate_homography_dlt(&pairs).unwrap();
        assert!((h.matrix() - Matrix3::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn dlt_recovers_known_homography() {
        let truth = Homography::new(Matrix3::new(
            1.05, 0.08, 12.0, //
            -0.04, 0.97, -7.0, //
            2e-4, -1e-4, 1.0,
        ))
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<_> = (0..20)
            .map(|_| {
                let p = Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
                (p, truth.apply(&p).unwrap())
            })
            .collect();
        let h = estimate_homography_dlt(&pairs).unwrap();
        let worst = pairs
            .iter()
            .map(|(s, d)| (h.apply(s).unwrap() - d).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "transfer error {worst}");
        assert!((h.matrix() - truth.matrix()).abs().max() < 1e-6);
    }

    #[test]
    fn dlt_rejects_degenerate_input() {
        let line: Vec<_> = (0..4)
            .map(|i| {
                let p = Pixel::new(i as f64 * 10.0, i as f64 * 5.0);
                (p, p)
            })
            .collect();
        assert!(matches!(
            estimate_homography_dlt(&line),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        assert!(matches!(
            estimate_homography_dlt(&line[..3]),
            Err(GeometryError::InsufficientPoints(3))
        ));
        let three_on_line = vec![
            (Pixel::new(0.0, 0.0), Pixel::new(0.0, 0.0)),
            (Pixel::new(1.0, 0.0), Pixel::new(1.0, 0.0)),
            (Pixel::new(2.0, 0.0), Pixel::new(2.0, 0.0)),
            (Pixel::new(0.0, 5.0), Pixel::new(0.0, 5.0)),
        ];
        assert!(matches!(
            estimate_homography_dlt(&three_on_line),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn apply_examples() {
        let q = Quad::rect(3.0, 4.0, 30.0, 40.0);
        assert_eq!(Homography::identity().apply_quad(&q).unwrap(), q);
        let p = Homography::translation(5.0, 0.0).apply(&Pixel::new(0.0, 0.0)).unwrap();
        assert_eq!(p, Pixel::new(5.0, 0.0));
        let h = Homography::new(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0)).unwrap();
        assert!(matches!(
            h.apply(&Pixel::new(-1.0, 3.0)),
            Err(GeometryError::PointAtInfinity { .. })
        ));
    }

    #[test]
    fn rotated_rect_matches_plane_projection() {
        // back-project the rect onto the z=1 plane and project under the turned pose
        let k = CameraIntrinsics::centered(400.0, 640, 480).unwrap();
        let pose1 = CameraPose::identity();
        let pose2 = pose1.turned(&camera_motion(10.0, 0.0, 0.0));
        let h = homography_pure_rotation(&k, &pose1.rotation_to(&pose2)).unwrap();
        let rect = Quad::rect(220.0, 160.0, 420.0, 320.0);
        let warped = h.apply_quad(&rect).unwrap();
        for (c, w) in rect.corners.iter().zip(warped.corners.iter()) {
            let ray = k.back_project(c);
            let direct = project(&k, &pose2, &Point3::from(ray)).unwrap();
            assert!((direct - w).norm() < 1e-6);
        }
    }

    #[test]
    fn warp_identity_is_byte_equal() {
        let img = Frame::from_fn(31, 17, |x, y| [(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x + y) % 256) as u8]);
        let out = warp_image(&img, &Homography::identity(), 31, 17, [0, 0, 0]);
        assert_eq!(out, img);
    }

    #[test]
    fn warp_round_trip_keeps_psnr() {
        let img = Frame::from_fn(128, 128, |x, y| {
            let v = (x as f64 * 1.5 + y as f64 * 0.5) as u8;
            [v, (y * 2) as u8, 128]
        });
        let t = Homography::new(Matrix3::new(1.0, 0.01, 2.5, -0.01, 1.0, 1.5, 0.0, 0.0, 1.0)).unwrap();
        let there = warp_image(&img, &t, 128, 128, [0, 0, 0]);
        let back = warp_image(&there, &t.inverse(), 128, 128, [0, 0, 0]);
        // compare the interior, away from fill introduced at the borders
        let mut se = 0.0;
        let mut n = 0.0;
        for y in 8..120 {
            for x in 8..120 {
                let a = img.get(x, y);
                let b = back.get(x, y);
                for c in 0..3 {
                    se += (a[c] as f64 - b[c] as f64).powi(2);
                    n += 1.0;
                }
            }
        }
        let psnr = 10.0 * (255.0f64.powi(2) / (se / n)).log10();
        assert!(psnr > 30.0, "psnr {psnr}");
    }

    #[test]
    fn warp_outside_is_fill() {
        let img = Frame::filled(10, 10, [200, 10, 10]);
        let out = warp_image(&img, &Homography::translation(1000.0, 0.0), 10, 10, [1, 2, 3]);
        assert_eq!(out, Frame::filled(10, 10, [1, 2, 3]));
    }

    #[test]
    fn rectangularity_examples() {
        assert_eq!(rectangularity(&Quad::rect(0.0, 0.0, 4.0, 2.0)).unwrap(), 1.0);
        let s = 60f64.to_radians();
        let para = Quad::new([
            Pixel::new(0.0, 0.0),
            Pixel::new(10.0, 0.0),
            Pixel::new(10.0 + 5.0 * s.cos(), 5.0 * s.sin()),
            Pixel::new(5.0 * s.cos(), 5.0 * s.sin()),
        ])
        .unwrap();
        assert!((rectangularity(&para).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let flat = Quad::new([Pixel::new(0.0, 0.0), Pixel::new(1.0, 0.0), Pixel::new(2.0, 0.0), Pixel::new(3.0, 0.0)]).unwrap();
        assert_eq!(rectangularity(&flat), Err(GeometryError::DegenerateQuad));
    }

    #[test]
    fn guidance_box_examples() {
        let k = CameraIntrinsics::centered(300.0, 640, 480).unwrap();
        let rect = Quad::rect(160.0, 120.0, 480.0, 360.0);
        let same = guidance_box(&rect, &Homography::identity()).unwrap();
        assert_eq!(rectangularity(&same).unwrap(), 1.0);
        let h = homography_pure_rotation(&k, &camera_motion(20.0, 0.0, 0.0).transpose()).unwrap();
        assert!(rectangularity(&guidance_box(&rect, &h).unwrap()).unwrap() < 1.0);
        let skewed = Quad::new([Pixel::new(0.0, 0.0), Pixel::new(5.0, 1.0), Pixel::new(5.0, 5.0), Pixel::new(0.0, 5.0)]).unwrap();
        assert_eq!(guidance_box(&skewed, &h), Err(GeometryError::NotAxisAligned));
    }

    #[test]
    fn rotation_angle_examples() {
        let k = CameraIntrinsics::centered(320.0, 640, 480).unwrap();
        assert_eq!(rotation_angle_from_homography(&k, &Homography::identity()).unwrap(), 0.0);
        let h = homography_pure_rotation(&k, &camera_motion(10.0, 0.0, 0.0)).unwrap();
        assert!((rotation_angle_from_homography(&k, &h).unwrap() - 10.0).abs() < 1e-6);
        // plane z = 2 seen after a 1.5-unit sideways translation: H = K (I - t nᵀ / d) K⁻¹
        let t = Vector3::new(1.5, 0.0, 0.3);
        let n = Vector3::new(0.0, 0.0, 1.0);
        let plane = Matrix3::identity() - t * n.transpose() / 2.0;
        let h = Homography::new(k.matrix() * plane * k.inverse_matrix()).unwrap();
        assert!(matches!(
            rotation_angle_from_homography(&k, &h),
            Err(GeometryError::NotRotational { .. })
        ));
    }

    #[test]
    fn focal_scale_of_zoom_and_rotation() {
        let k = CameraIntrinsics::centered(320.0, 640, 480).unwrap();
        let zoom = Homography::new(k.matrix() * Matrix3::from_diagonal(&Vector3::new(1.1, 1.1, 1.0)) * k.inverse_matrix()).unwrap();
        assert!((focal_scale_from_homography(&k, &zoom) - 1.1).abs() < 1e-12);
        let rot = homography_pure_rotation(&k, &camera_motion(5.0, 3.0, 1.0)).unwrap();
        assert!((focal_scale_from_homography(&k, &rot) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_vector_signs_follow_convention() {
        let w = rotation_vector_deg(&camera_motion(2.0, 0.0, 0.0));
        assert!((w.y - 2.0).abs() < 1e-12 && w.x.abs() < 1e-12 && w.z.abs() < 1e-12);
        let w = rotation_vector_deg(&camera_motion(0.0, -3.0, 0.0));
        assert!((w.x + 3.0).abs() < 1e-12);
    }

    fn random_rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..170.0).prop_filter_map(
            "non-zero axis",
            |(x, y, z, deg)| {
                let axis = Vector3::new(x, y, z);
                (axis.norm() > 1e-3).then(|| motion_from_rotation_vector(&(axis.normalize() * deg)))
            },
        )
    }

    proptest! {
        #[test]
        fn rotation_angle_inverts_pure_rotation(r in random_rotation(), f in 100.0f64..800.0) {
            let k = CameraIntrinsics::centered(f, 640, 480).unwrap();
            let h = homography_pure_rotation(&k, &r).unwrap();
            let got = rotation_angle_from_homography(&k, &h).unwrap();
            prop_assert!((got - geodesic_angle_deg(&r)).abs() < 1e-6);
        }

        #[test]
        fn homography_inverse_round_trip(
            a in 0.5f64..1.5, b in -0.3f64..0.3, c in -50.0f64..50.0,
            d in -0.3f64..0.3, e in 0.5f64..1.5, f in -50.0f64..50.0,
            g in -1e-4f64..1e-4, h in -1e-4f64..1e-4,
            px in 0.0f64..640.0, py in 0.0f64..480.0,
        ) {
            let hm = Homography::new(Matrix3::new(a, b, c, d, e, f, g, h, 1.0)).unwrap();
            let p = Pixel::new(px, py);
            let back = hm.inverse().apply(&hm.apply(&p).unwrap()).unwrap();
            prop_assert!((back - p).norm() < 1e-9);
        }

        #[test]
        fn dlt_recovers_generator(
            a in 0.7f64..1.3, b in -0.2f64..0.2, c in -30.0f64..30.0,
            d in -0.2f64..0.2, e in 0.7f64..1.3, f in -30.0f64..30.0,
            g in -3e-4f64..3e-4, h in -3e-4f64..3e-4, seed in 0u64..1000,
        ) {
            let truth = Homography::new(Matrix3::new(a, b, c, d, e, f, g, h, 1.0)).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pairs: Vec<_> = (0..8).map(|_| {
                let p = Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
                (p, truth.apply(&p).unwrap())
            }).collect();
            let est = estimate_homography_dlt(&pairs).unwrap();
            prop_assert!((est.matrix() - truth.matrix()).abs().max() < 1e-6);
        }

        #[test]
        fn rectangularity_is_similarity_invariant(
            x0 in -100.0f64..100.0, y0 in -100.0f64..100.0,
            skew in -20.0f64..20.0, w in 5.0f64..50.0, hh in 5.0f64..50.0,
            tx in -500.0f64..500.0, ty in -500.0f64..500.0, s in 0.1f64..10.0, quarter in 0u8..4,
        ) {
            let q = Quad::new([
                Pixel::new(x0, y0), Pixel::new(x0 + w, y0),
                Pixel::new(x0 + w + skew, y0 + hh), Pixel::new(x0 + skew * 0.3, y0 + hh),
            ]).unwrap();
            let map = |p: &Pixel| {
                let (x, y) = match quarter { 0 => (p.x, p.y), 1 => (-p.y, p.x), 2 => (-p.x, -p.y), _ => (p.y, -p.x) };
                Pixel::new(s * x + tx, s * y + ty)
            };
            let moved = Quad::new(q.corners.map(|c| map(&c))).unwrap();
            prop_assert!((rectangularity(&q).unwrap() - rectangularity(&moved).unwrap()).abs() < 1e-9);
        }
    }
}
