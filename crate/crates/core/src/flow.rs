//! Rectified flow: straight noising paths, the flow-matching target, and the
//! Euler sampler integrating from noise (`t = 1`) to data (`t = 0`).

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, rng_for, Rng};
use crate::video::{Video, VideoShape};

#[derive(Clone, Debug, PartialEq)]
pub struct NoisedSample {
    pub z_t: Video,
    pub t: f64,
    pub eps: Video,
}

fn same_shape(a: &Video, b: &Video) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Standard normal video.
pub fn gaussian(shape: VideoShape, rng: &mut Rng) -> Video {
    let (f, c, h, w) = shape;
    let data = (0..f * c * h * w)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Video::from_vec(shape, data).expect("sized to shape")
}

/// `z_t = (1 - t) z0 + t eps`.
pub fn forward_noise(z0: &Video, eps: &Video, t: f64) -> Result<NoisedSample> {
    same_shape(z0, eps)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain {
            value: t,
            domain: "t in [0, 1]",
        });
    }
    let data = z0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(a, e)| (1.0 - t) * a + t * e)
        .collect();
    Ok(NoisedSample {
        z_t: Video::from_vec(z0.shape(), data)?,
        t,
        eps: eps.clone(),
    })
}

/// Time derivative of the noising path, `eps - z0`.
pub fn cfm_target(z0: &Video, eps: &Video) -> Result<Video> {
    same_shape(z0, eps)?;
    let data = eps.data().iter().zip(z0.data()).map(|(e, a)| e - a).collect();
    Video::from_vec(z0.shape(), data)
}

pub fn cfm_loss(v_pred: &Video, z0: &Video, eps: &Video) -> Result<f64> {
    let target = cfm_target(z0, eps)?;
    let loss = v_pred.mse(&target)?;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite flow-matching loss".into()));
    }
    Ok(loss)
}

/// Initial state of [`euler_sample`] for `seed`.
pub fn initial_noise(shape: VideoShape, seed: u64) -> Video {
    gaussian(shape, &mut rng_for(seed, &[rng::SAMPLER]))
}

/// Integrates `dz/dt = v(z, t)` from `z` at `t = 1` down to `t = 0` in
/// `steps` uniform Euler steps.
pub fn euler_integrate(
    mut model_fn: impl FnMut(&Video, f64) -> Result<Video>,
    mut z: Video,
    steps: usize,
) -> Result<Video> {
    if steps == 0 {
        return Err(Error::Config("the sampler needs at least one step".into()));
    }
    let dt = -1.0 / steps as f64;
    for k in 0..steps {
        let t = 1.0 - k as f64 / steps as f64;
        let v = model_fn(&z, t)?;
        same_shape(&z, &v)?;
        for (zi, vi) in z.data_mut().iter_mut().zip(v.data()) {
            *zi += vi * dt;
        }
        if !z.is_finite() {
            return Err(Error::Numeric(format!("non-finite sampler state at step {k}")));
        }
    }
    Ok(z)
}

/// Samples from pure noise drawn from `seed`. Conditions are whatever
/// `model_fn` captures; it is called once per step.
pub fn euler_sample(
    model_fn: impl FnMut(&Video, f64) -> Result<Video>,
    shape: VideoShape,
    steps: usize,
    seed: u64,
) -> Result<Video> {
    euler_integrate(model_fn, initial_noise(shape, seed), steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> (Video, Video) {
        let mut r = rng_for(5, &[]);
        let z0 = gaussian((2, 3, 4, 4), &mut r);
        let e = gaussian((2, 3, 4, 4), &mut r);
        (z0, e)
    }

    #[test]
    fn endpoints_and_midpoint() {
        let (z0, e) = pair();
        assert_eq!(forward_noise(&z0, &e, 0.0).unwrap().z_t, z0);
        assert_eq!(forward_noise(&z0, &e, 1.0).unwrap().z_t, e);
        let mid = forward_noise(&z0, &e, 0.5).unwrap().z_t;
        for ((m, a), b) in mid.data().iter().zip(z0.data()).zip(e.data()) {
            assert!((m - (a + b) / 2.0).abs() < 1e-15);
        }
        assert!(matches!(
            forward_noise(&z0, &e, 1.5),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn loss_examples() {
        let (z0, e) = pair();
        let v = cfm_target(&z0, &e).unwrap();
        assert_eq!(cfm_loss(&v, &z0, &e).unwrap(), 0.0);
        let off = v.map(|x| x + 1.0);
        assert!((cfm_loss(&off, &z0, &e).unwrap() - 1.0).abs() < 1e-12);
        let nan = v.map(|_| f64::NAN);
        assert!(matches!(cfm_loss(&nan, &z0, &e), Err(Error::Numeric(_))));
    }

    #[test]
    fn sampler_reports_failing_step() {
        let r = euler_sample(
            |z, t| Ok(z.map(|_| if t < 0.6 { f64::INFINITY } else { 0.0 })),
            (1, 1, 2, 2),
            4,
            0,
        );
        match r {
            Err(Error::Numeric(m)) => assert!(m.contains("step 2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
