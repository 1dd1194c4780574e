//! Centripetal Catmull-Rom curve through a polyline, reparameterised by arc
//! length.

use crate::camera::Vec3;

const SAMPLES_PER_SEGMENT: usize = 64;
const KNOT_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ArcLengthSpline {
    points: Vec<Vec3>,
    /// cumulative arc length at (segment, sample) grid positions
    table: Vec<f64>,
}

impl ArcLengthSpline {
    /// `points` must hold at least two entries.
    pub fn new(points: Vec<Vec3>) -> Self {
        assert!(points.len() >= 2, "spline needs two or more points");
        let mut spline = Self {
            points,
            table: Vec::new(),
        };
        spline.build_table();
        spline
    }

    fn segments(&self) -> usize {
        self.points.len() - 1
    }

    fn build_table(&mut self) {
        let n = self.segments() * SAMPLES_PER_SEGMENT;
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let mut prev = self.eval_param(0.0);
        let mut acc = 0.0;
        for i in 1..=n {
            let p = self.eval_param(i as f64 / SAMPLES_PER_SEGMENT as f64);
            acc += (p - prev).norm();
            table.push(acc);
            prev = p;
        }
        self.table = table;
    }

    pub fn length(&self) -> f64 {
        *self.table.last().unwrap()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Uniformly scales the curve about its first point so that its length
    /// becomes `target`. Centripetal knots scale with the geometry, so the
    /// reparameterised curve is an exact similarity image.
    pub fn scaled_to_length(&self, target: f64) -> Self {
        let len = self.length();
        let s = if len > 0.0 { target / len } else { 1.0 };
        let origin = self.points[0];
        let points = self.points.iter().map(|p| origin + (p - origin) * s).collect();
        Self::new(points)
    }

    fn control(&self, i: isize) -> Vec3 {
        let n = self.points.len() as isize;
        if i < 0 {
            2.0 * self.points[0] - self.points[1]
        } else if i >= n {
            2.0 * self.points[(n - 1) as usize] - self.points[(n - 2) as usize]
        } else {
            self.points[i as usize]
        }
    }

    /// Curve position at raw parameter `s ∈ [0, segments]`.
    fn eval_param(&self, s: f64) -> Vec3 {
        let segs = self.segments();
        let s = s.clamp(0.0, segs as f64);
        let seg = (s.floor() as usize).min(segs - 1);
        let local = s - seg as f64;
        let i = seg as isize;
        let (p0, p1, p2, p3) = (
            self.control(i - 1),
            self.control(i),
            self.control(i + 1),
            self.control(i + 2),
        );
        let knot = |a: &Vec3, b: &Vec3| (b - a).norm().sqrt().max(KNOT_EPS);
        let t0 = 0.0;
        let t1 = t0 + knot(&p0, &p1);
        let t2 = t1 + knot(&p1, &p2);
        let t3 = t2 + knot(&p2, &p3);
        let t = t1 + local * (t2 - t1);
        let a1 = p0 * ((t1 - t) / (t1 - t0)) + p1 * ((t - t0) / (t1 - t0));
        let a2 = p1 * ((t2 - t) / (t2 - t1)) + p2 * ((t - t1) / (t2 - t1));
        let a3 = p2 * ((t3 - t) / (t3 - t2)) + p3 * ((t - t2) / (t3 - t2));
        let b1 = a1 * ((t2 - t) / (t2 - t0)) + a2 * ((t - t0) / (t2 - t0));
        let b2 = a2 * ((t3 - t) / (t3 - t1)) + a3 * ((t - t1) / (t3 - t1));
        b1 * ((t2 - t) / (t2 - t1)) + b2 * ((t - t1) / (t2 - t1))
    }

    /// Position at arc-length fraction `u ∈ [0, 1]`.
    pub fn at_fraction(&self, u: f64) -> Vec3 {
        let target = u.clamp(0.0, 1.0) * self.length();
        let idx = self.table.partition_point(|&l| l < target);
        if idx == 0 {
            return self.eval_param(0.0);
        }
        if idx >= self.table.len() {
            return self.eval_param(self.segments() as f64);
        }
        let (l0, l1) = (self.table[idx - 1], self.table[idx]);
        let w = if l1 > l0 { (target - l0) / (l1 - l0) } else { 0.0 };
        let s = (idx - 1) as f64 + w;
        self.eval_param(s / SAMPLES_PER_SEGMENT as f64)
    }
}
