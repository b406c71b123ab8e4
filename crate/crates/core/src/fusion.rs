//! Sensor alignment, metric scaling of pixel motion and the planar EKF.
//!
//! Frames: the camera looks down with x to the image right, y to the image
//! bottom and z along the optical axis. The world frame coincides with the
//! camera frame at yaw 0, so `psi` rotates camera xy into world xy; `z` is
//! height above the ground plane. A level accelerometer reads `-9.81` on z.

use nalgebra::{Matrix2, Matrix3, Matrix4, SMatrix, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::px4flow::{dominant_flow, FlowVector};
use crate::rigid::RigidMotion2D;

pub type Matrix6 = nalgebra::Matrix6<f64>;

pub const GRAVITY: f64 = 9.81;
pub const TOF_MAX_RANGE: f64 = 4.0;

pub const IX: usize = 0;
pub const IY: usize = 1;
pub const IZ: usize = 2;
pub const IPSI: usize = 3;
pub const IVX: usize = 4;
pub const IVY: usize = 5;

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[inline]
pub fn rot2(psi: f64) -> Matrix2<f64> {
    let (s, c) = psi.sin_cos();
    Matrix2::new(c, -s, s, c)
}

#[inline]
fn rot2_derivative(psi: f64) -> Matrix2<f64> {
    let (s, c) = psi.sin_cos();
    Matrix2::new(-s, -c, c, -s)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub timestamp: f64,
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config(format!(
                "focal lengths must be positive and finite, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be non-zero".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrinsics {
    pub cam_from_imu: Matrix4<f64>,
    pub cam_from_tof: Matrix4<f64>,
}

impl Default for Extrinsics {
    fn default() -> Self {
        Self {
            cam_from_imu: Matrix4::identity(),
            cam_from_tof: Matrix4::identity(),
        }
    }
}

fn check_transform(name: &str, t: &Matrix4<f64>) -> Result<()> {
    let r: Matrix3<f64> = t.fixed_view::<3, 3>(0, 0).into_owned();
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    let det = r.determinant();
    let bottom = t.fixed_view::<1, 4>(3, 0);
    if !(ortho < 1e-6 && (det - 1.0).abs() < 1e-6) {
        return Err(Error::Config(format!(
            "{name}: rotation block is not a proper rotation (orthogonality error {ortho:.2e}, det {det})"
        )));
    }
    if (bottom[0], bottom[1], bottom[2], bottom[3]) != (0.0, 0.0, 0.0, 1.0) {
        return Err(Error::Config(format!("{name}: last row must be 0 0 0 1")));
    }
    Ok(())
}

impl Extrinsics {
    pub fn validate(&self) -> Result<()> {
        check_transform("cam_from_imu", &self.cam_from_imu)?;
        check_transform("cam_from_tof", &self.cam_from_tof)
    }

    pub fn imu_rotation(&self) -> Matrix3<f64> {
        self.cam_from_imu.fixed_view::<3, 3>(0, 0).into_owned()
    }
}

/// Rotate an IMU sample into the camera frame. Lever-arm terms are ignored.
pub fn to_camera_frame(sample: &ImuSample, ext: &Extrinsics) -> ImuSample {
    let r = ext.imu_rotation();
    ImuSample {
        timestamp: sample.timestamp,
        accel: r * sample.accel,
        gyro: r * sample.gyro,
    }
}

/// Planar camera-frame velocity (m/s) and yaw rate (rad/s).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricMotion {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

/// Scale a per-frame pixel motion to metric velocity with the pinhole model.
pub fn pixel_to_metric(m: &RigidMotion2D, height_m: f64, intr: &CameraIntrinsics, dt_s: f64) -> Result<MetricMotion> {
    if !(height_m > 0.0) || !(dt_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "height and dt must be positive, got height={height_m} dt={dt_s}"
        )));
    }
    Ok(MetricMotion {
        vx: m.du * height_m / (intr.fx * dt_s),
        vy: m.dv * height_m / (intr.fy * dt_s),
        yaw_rate: m.dpsi / dt_s,
    })
}

/// Filter noise settings. Densities are per second and scaled by `dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    /// Accelerometer white noise, (m/s^2)^2 * s.
    pub accel: f64,
    /// Gyroscope white noise, (rad/s)^2 * s.
    pub gyro: f64,
    /// Height random walk, m^2 / s.
    pub height_walk: f64,
    /// Flow velocity measurement variance, (m/s)^2.
    pub flow_velocity: f64,
    /// Visual yaw-rate variance, (rad/s)^2.
    pub yaw_rate: f64,
    /// ToF standard deviation as a fraction of range.
    pub tof_relative: f64,
    /// Innovation gate in standard deviations.
    pub gate_sigma: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            accel: 0.35,
            gyro: 0.01,
            height_walk: 0.01,
            flow_velocity: 0.05,
            yaw_rate: 0.002,
            tof_relative: 0.0015,
            gate_sigma: 5.0,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("accel", self.accel),
            ("gyro", self.gyro),
            ("height_walk", self.height_walk),
            ("flow_velocity", self.flow_velocity),
            ("yaw_rate", self.yaw_rate),
            ("tof_relative", self.tof_relative),
            ("gate_sigma", self.gate_sigma),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("noise.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

type Vector7 = nalgebra::SVector<f64, 7>;
type Matrix7 = nalgebra::SMatrix<f64, 7, 7>;

/// Yaw cloned at the last frame, so visual yaw increments can be fused as
/// relative measurements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YawAnchor {
    pub psi: f64,
    /// Variance of the anchored yaw.
    pub var: f64,
    /// Covariance between the current state and the anchored yaw.
    pub cross: Vector6<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub p: Matrix6,
    pub anchor: YawAnchor,
}

impl NavState {
    /// At rest at the world origin with the given height and yaw.
    pub fn at_rest(z: f64, psi: f64) -> Self {
        let p = Matrix6::from_diagonal(&Vector6::new(0.0, 0.0, 1e-2, 1e-4, 1e-2, 1e-2));
        Self {
            x: 0.0,
            y: 0.0,
            z,
            psi: wrap_angle(psi),
            vx: 0.0,
            vy: 0.0,
            p,
            anchor: YawAnchor {
                psi: wrap_angle(psi),
                var: p[(IPSI, IPSI)],
                cross: p.column(IPSI).into(),
            },
        }
    }

    pub fn mean(&self) -> Vector6<f64> {
        Vector6::new(self.x, self.y, self.z, self.psi, self.vx, self.vy)
    }

    fn with_mean(&self, m: &Vector6<f64>, p: Matrix6) -> Self {
        Self {
            x: m[IX],
            y: m[IY],
            z: m[IZ],
            psi: wrap_angle(m[IPSI]),
            vx: m[IVX],
            vy: m[IVY],
            p: symmetrize(&p),
            anchor: self.anchor,
        }
    }

    /// Clone the current yaw as the reference for the next visual increment.
    pub fn anchor_yaw(&self) -> Self {
        Self {
            anchor: YawAnchor {
                psi: self.psi,
                var: self.p[(IPSI, IPSI)],
                cross: self.p.column(IPSI).into(),
            },
            ..*self
        }
    }

    fn augmented(&self) -> (Vector7, Matrix7) {
        let mut m = Vector7::zeros();
        m.fixed_rows_mut::<6>(0).copy_from(&self.mean());
        m[6] = self.anchor.psi;
        let mut p = Matrix7::zeros();
        p.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.p);
        p.fixed_view_mut::<6, 1>(0, 6).copy_from(&self.anchor.cross);
        p.fixed_view_mut::<1, 6>(6, 0).copy_from(&self.anchor.cross.transpose());
        p[(6, 6)] = self.anchor.var;
        (m, p)
    }

    fn from_augmented(m: &Vector7, p: &Matrix7) -> Self {
        let p = (p + p.transpose()) * 0.5;
        Self {
            x: m[IX],
            y: m[IY],
            z: m[IZ],
            psi: wrap_angle(m[IPSI]),
            vx: m[IVX],
            vy: m[IVY],
            p: p.fixed_view::<6, 6>(0, 0).into(),
            anchor: YawAnchor {
                psi: wrap_angle(m[6]),
                var: p[(6, 6)],
                cross: p.fixed_view::<6, 1>(0, 6).into(),
            },
        }
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vy)
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.p.symmetric_eigenvalues().min()
    }
}

fn symmetrize(p: &Matrix6) -> Matrix6 {
    (p + p.transpose()) * 0.5
}

/// Propagate the state with one camera-frame IMU sample.
pub fn ekf_predict(s: &NavState, imu: &ImuSample, dt_s: f64, noise: &NoiseParams) -> Result<NavState> {
    if !(dt_s > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt_s}")));
    }
    let dt = dt_s;
    let a_body = Vector2::new(imu.accel.x, imu.accel.y);
    // rotation at mid-interval
    let psi_mid = s.psi + 0.5 * imu.gyro.z * dt;
    let a = rot2(psi_mid) * a_body;
    let da = rot2_derivative(psi_mid) * a_body;

    let v = s.velocity();
    let v_new = v + a * dt;
    let p_new = Vector2::new(s.x, s.y) + v * dt + a * (0.5 * dt * dt);
    let mean = Vector6::new(p_new.x, p_new.y, s.z, s.psi + imu.gyro.z * dt, v_new.x, v_new.y);

    let mut f = Matrix6::identity();
    f[(IX, IVX)] = dt;
    f[(IY, IVY)] = dt;
    f[(IX, IPSI)] = 0.5 * dt * dt * da.x;
    f[(IY, IPSI)] = 0.5 * dt * dt * da.y;
    f[(IVX, IPSI)] = dt * da.x;
    f[(IVY, IPSI)] = dt * da.y;

    let mut q = Matrix6::zeros();
    let qa = noise.accel;
    for (ip, iv) in [(IX, IVX), (IY, IVY)] {
        q[(ip, ip)] = qa * dt.powi(3) / 3.0;
        q[(ip, iv)] = qa * dt.powi(2) / 2.0;
        q[(iv, ip)] = qa * dt.powi(2) / 2.0;
        q[(iv, iv)] = qa * dt;
    }
    q[(IPSI, IPSI)] = noise.gyro * dt;
    q[(IZ, IZ)] = noise.height_walk * dt;

    let mut out = s.with_mean(&mean, f * s.p * f.transpose() + q);
    out.anchor.cross = f * s.anchor.cross;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateOutcome {
    Applied,
    /// Measurement was flagged invalid; the state is untouched.
    Skipped,
    /// Innovation exceeded the gate; carries the squared Mahalanobis distance.
    Rejected(f64),
    /// Range reading outside the sensor limits.
    OutOfRange,
}

/// Visual measurement for one frame interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowMeasurement {
    pub motion: MetricMotion,
    /// Frame interval the motion spans.
    pub dt: f64,
    pub valid: bool,
}

fn joseph_update<const M: usize>(
    s: &NavState,
    innovation: SMatrix<f64, M, 1>,
    h: SMatrix<f64, M, 7>,
    r: SMatrix<f64, M, M>,
    gate_sigma: f64,
) -> (NavState, UpdateOutcome) {
    let (mean, p) = s.augmented();
    let sm = h * p * h.transpose() + r;
    let Some(s_inv) = sm.try_inverse() else {
        return (*s, UpdateOutcome::Rejected(f64::INFINITY));
    };
    let d2 = (innovation.transpose() * s_inv * innovation)[(0, 0)];
    if !(d2 <= gate_sigma * gate_sigma) {
        return (*s, UpdateOutcome::Rejected(d2));
    }
    let k = p * h.transpose() * s_inv;
    let i_kh = Matrix7::identity() - k * h;
    let p = i_kh * p * i_kh.transpose() + k * r * k.transpose();
    let mean = mean + k * innovation;
    (NavState::from_augmented(&mean, &p), UpdateOutcome::Applied)
}

/// Fuse the visual velocity and yaw increment.
///
/// The camera-frame velocity is compared with the state velocity rotated into
/// the camera frame at mid-interval; the yaw increment is measured against
/// the yaw anchored at the previous frame (see [`NavState::anchor_yaw`]).
pub fn ekf_update_flow(s: &NavState, meas: &FlowMeasurement, noise: &NoiseParams) -> (NavState, UpdateOutcome) {
    let m = meas.motion;
    let finite = m.vx.is_finite() && m.vy.is_finite() && m.yaw_rate.is_finite() && meas.dt.is_finite();
    if !meas.valid || !finite || !(meas.dt > 0.0) {
        return (*s, UpdateOutcome::Skipped);
    }
    let theta = s.psi - 0.5 * m.yaw_rate * meas.dt;
    let rt = rot2(theta).transpose();
    let drt = rot2_derivative(theta).transpose();
    let v = s.velocity();
    let predicted = rt * v;
    let dpred = drt * v;

    let innovation = nalgebra::Vector3::new(
        m.vx - predicted.x,
        m.vy - predicted.y,
        wrap_angle(m.yaw_rate * meas.dt - (s.psi - s.anchor.psi)),
    );

    let mut h = SMatrix::<f64, 3, 7>::zeros();
    h[(0, IVX)] = rt[(0, 0)];
    h[(0, IVY)] = rt[(0, 1)];
    h[(1, IVX)] = rt[(1, 0)];
    h[(1, IVY)] = rt[(1, 1)];
    h[(0, IPSI)] = dpred.x;
    h[(1, IPSI)] = dpred.y;
    h[(2, IPSI)] = 1.0;
    h[(2, 6)] = -1.0;

    let r = Matrix3::from_diagonal(&Vector3::new(
        noise.flow_velocity,
        noise.flow_velocity,
        noise.yaw_rate * meas.dt * meas.dt,
    ));
    joseph_update(s, innovation, h, r, noise.gate_sigma)
}

/// Scalar height update from a ToF range (level flight: range equals height).
pub fn ekf_update_height(s: &NavState, range_m: f64, noise: &NoiseParams) -> (NavState, UpdateOutcome) {
    if !(range_m > 0.0 && range_m <= TOF_MAX_RANGE) {
        return (*s, UpdateOutcome::OutOfRange);
    }
    let mut h = SMatrix::<f64, 1, 7>::zeros();
    h[(0, IZ)] = 1.0;
    let sigma = noise.tof_relative * range_m;
    let r = SMatrix::<f64, 1, 1>::new(sigma * sigma);
    joseph_update(s, SMatrix::<f64, 1, 1>::new(range_m - s.z), h, r, noise.gate_sigma)
}

/// Planar motion over one frame in the camera frame of the earlier frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PoseIncrement {
    pub dx: f64,
    pub dy: f64,
    pub dpsi: f64,
}

impl PoseIncrement {
    /// Dead-reckon a world pose `(x, y, psi)` by this increment.
    pub fn apply(&self, x: f64, y: f64, psi: f64) -> (f64, f64, f64) {
        let d = rot2(psi) * Vector2::new(self.dx, self.dy);
        (x + d.x, y + d.y, wrap_angle(psi + self.dpsi))
    }
}

/// One step of the flow-only reference mode: dominant flow, gyro
/// compensation of rotation-induced flow, then metric ego-motion.
pub fn reference_pipeline_step(
    flows: &[FlowVector],
    gyro: &Vector3<f64>,
    dt_s: f64,
    height_m: f64,
    intr: &CameraIntrinsics,
) -> Result<PoseIncrement> {
    if !(height_m > 0.0) || !(dt_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "height and dt must be positive, got height={height_m} dt={dt_s}"
        )));
    }
    let (fu, fv) = dominant_flow(flows);
    let rot_u = -intr.fx * gyro.y * dt_s;
    let rot_v = intr.fy * gyro.x * dt_s;
    let (tu, tv) = (fu - rot_u, fv - rot_v);
    Ok(PoseIncrement {
        dx: -tu * height_m / intr.fx,
        dy: -tv * height_m / intr.fy,
        dpsi: gyro.z * dt_s,
    })
}
