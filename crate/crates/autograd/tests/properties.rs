use autograd::{clip_global_norm, Tape, Tensor};
use proptest::prelude::*;

fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0..2.0f64, rows * cols)
        .prop_map(move |d| Tensor::from_vec(rows, cols, d).unwrap())
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_transposes(a in tensor(3, 4), b in tensor(4, 2)) {
        let ab = a.matmul(&b).unwrap().transpose();
        let ba = b.transpose().matmul(&a.transpose()).unwrap();
        prop_assert!(close(&ab, &ba, 1e-12));
    }

    #[test]
    fn mse_gradient_is_scaled_residual(p in tensor(2, 3), t in tensor(2, 3)) {
        let mut tape = Tape::new();
        let x = tape.param(p.clone());
        let loss = tape.mse(x, &t).unwrap();
        let g = tape.backward(loss).unwrap();
        let n = p.len() as f64;
        let expect: Vec<f64> = p.data().iter().zip(t.data()).map(|(a, b)| 2.0 * (a - b) / n).collect();
        prop_assert!(close(g.get(x).unwrap(), &Tensor::from_vec(2, 3, expect).unwrap(), 1e-12));
    }

    #[test]
    fn rms_norm_rows_have_unit_rms(x in tensor(3, 5)) {
        prop_assume!((0..3).all(|r| x.row(r).iter().map(|v| v * v).sum::<f64>() > 1e-3));
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let y = tape.rms_norm(v);
        let out = tape.value(y);
        for r in 0..3 {
            let rms = (out.row(r).iter().map(|v| v * v).sum::<f64>() / 5.0).sqrt();
            prop_assert!((rms - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn clipping_caps_the_global_norm(a in tensor(2, 2), b in tensor(1, 3), max in 0.1..3.0f64) {
        let mut grads = vec![Some(a), None, Some(b)];
        let before = clip_global_norm(&mut grads, max);
        let after: f64 = grads.iter().flatten().map(|g| g.sum_sq()).sum::<f64>().sqrt();
        prop_assert!(after <= max * (1.0 + 1e-12) || after <= before * (1.0 + 1e-12));
        prop_assert!((after - before.min(max)).abs() <= 1e-9 * before.max(1.0));
    }
}
