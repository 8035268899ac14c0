use super::*;

fn v<'a>(t: &'a Tape, shape: Vec<usize>, data: &[f32], grad: bool) -> Var<'a> {
    t.input(shape, data.to_vec(), grad).unwrap()
}

#[test]
fn add_componentwise() {
    let t = Tape::new();
    let a = v(&t, vec![2], &[1.0, 2.0], false);
    let b = v(&t, vec![2], &[3.0, 4.0], false);
    assert_eq!(a.add(b).unwrap().value(), vec![4.0, 6.0]);
}

#[test]
fn broadcast_bias_and_its_gradient() {
    let t = Tape::new();
    let x = v(&t, vec![2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], true);
    let b = v(&t, vec![2, 1], &[10.0, 20.0], true);
    let y = x.add(b).unwrap();
    assert_eq!(y.value(), vec![11.0, 12.0, 13.0, 24.0, 25.0, 26.0]);
    let g = t.backward(y.sum().unwrap()).unwrap();
    assert_eq!(g.wrt(b), vec![3.0, 3.0]);
    assert_eq!(g.wrt(x), vec![1.0; 6]);
}

#[test]
fn sign_maps_zero_to_zero_and_has_no_gradient() {
    let t = Tape::new();
    let x = v(&t, vec![3], &[-0.5, 0.0, 2.0], true);
    let s = x.sign().unwrap();
    assert_eq!(s.value(), vec![-1.0, 0.0, 1.0]);
    let g = t.backward(s.sum().unwrap()).unwrap();
    assert_eq!(g.wrt(x), vec![0.0; 3]);
}

#[test]
fn relu_backward() {
    let t = Tape::new();
    let x = v(&t, vec![2], &[-1.0, 2.0], true);
    let g = t.backward(x.relu().unwrap().sum().unwrap()).unwrap();
    assert_eq!(g.wrt(x), vec![0.0, 1.0]);
}

#[test]
fn log_guard_and_domain() {
    let t = Tape::new();
    let x = v(&t, vec![2], &[0.0, 1.0], false);
    let y = x.log().unwrap().value();
    assert!((y[0] - EPS.ln()).abs() < 1e-3 && y[1] == 0.0);
    let bad = v(&t, vec![1], &[-1.0], false);
    assert!(matches!(bad.log(), Err(TensorError::LogDomain(_))));
}

#[test]
fn non_finite_output_is_an_error() {
    let t = Tape::new();
    let x = v(&t, vec![1], &[100.0], false);
    assert!(matches!(
        x.exp().and_then(|e| e.exp()),
        Err(TensorError::NonFinite { .. })
    ));
    assert!(Tensor::new(vec![1], vec![f32::NAN]).is_err());
}

#[test]
fn shape_mismatch_is_an_error() {
    let t = Tape::new();
    let a = v(&t, vec![2], &[1.0, 2.0], false);
    let b = v(&t, vec![3], &[1.0, 2.0, 3.0], false);
    assert!(matches!(a.add(b), Err(TensorError::ShapeMismatch { .. })));
    let m = v(&t, vec![2, 3], &[0.0; 6], false);
    assert!(m.matmul(m).is_err());
}

#[test]
fn matmul_examples() {
    let t = Tape::new();
    let i = v(&t, vec![2, 2], &[1.0, 0.0, 0.0, 1.0], false);
    let c = v(&t, vec![2, 1], &[5.0, 7.0], false);
    assert_eq!(i.matmul(c).unwrap().value(), vec![5.0, 7.0]);

    let a = v(&t, vec![1, 2], &[1.0, 2.0], false);
    let b = v(&t, vec![2, 1], &[3.0, 4.0], true);
    let y = a.matmul(b).unwrap();
    assert_eq!(y.value(), vec![11.0]);
    let g = t.backward(y.sum().unwrap()).unwrap();
    assert_eq!(g.wrt(b), vec![1.0, 2.0]);
}

#[test]
fn conv1d_examples() {
    let t = Tape::new();
    let x = v(&t, vec![1, 3], &[1.0, 2.0, 3.0], false);
    let k = v(&t, vec![1, 1, 1], &[1.0], false);
    assert_eq!(x.conv1d(k, 1, 1, 0).unwrap().value(), vec![1.0, 2.0, 3.0]);

    let x = v(&t, vec![1, 4], &[1.0, 2.0, 3.0, 4.0], false);
    let k = v(&t, vec![1, 1, 2], &[1.0, 1.0], false);
    assert_eq!(x.conv1d(k, 2, 1, 0).unwrap().value(), vec![3.0, 7.0]);
    assert_eq!(x.conv1d(k, 1, 2, 0).unwrap().value(), vec![4.0, 6.0]);
}

#[test]
fn conv1d_rejects_short_input() {
    let t = Tape::new();
    let x = v(&t, vec![1, 3], &[1.0, 2.0, 3.0], false);
    let k = v(&t, vec![1, 1, 3], &[1.0; 3], false);
    assert!(x.conv1d(k, 1, 2, 0).is_err());
    assert!(x.conv1d(k, 0, 1, 1).is_err());
}

#[test]
fn log_softmax_examples() {
    let t = Tape::new();
    let x = v(&t, vec![2], &[0.0, 0.0], false);
    let y = x.log_softmax(0).unwrap().value();
    assert!((y[0] - 0.5f32.ln()).abs() < 1e-7 && (y[1] - 0.5f32.ln()).abs() < 1e-7);

    let big = v(&t, vec![2], &[1000.0, 0.0], false);
    let y = big.log_softmax(0).unwrap().value();
    assert!(y.iter().all(|v| v.is_finite()));

    let r = v(
        &t,
        vec![3, 4],
        &[0.3, -1.2, 2.5, 0.0, 1.0, 1.0, -3.0, 4.0, 0.1, 0.2, 0.3, 0.4],
        false,
    );
    let y = r.log_softmax(1).unwrap().value();
    for row in y.chunks(4) {
        let s: f32 = row.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn backward_examples() {
    let t = Tape::new();
    let x = v(&t, vec![2], &[1.0, 2.0], true);
    let g = t.backward(x.mul(x).unwrap().sum().unwrap()).unwrap();
    assert_eq!(g.wrt(x), vec![2.0, 4.0]);

    let t = Tape::new();
    let x = v(&t, vec![2], &[1.0, 2.0], true);
    let w = v(&t, vec![2], &[3.0, 4.0], true);
    let loss = w.square().unwrap().sum().unwrap();
    assert_eq!(t.backward(loss).unwrap().wrt(x), vec![0.0, 0.0]);
}

#[test]
fn backward_requires_scalar() {
    let t = Tape::new();
    let x = v(&t, vec![2], &[1.0, 2.0], true);
    assert!(matches!(t.backward(x), Err(TensorError::NotScalar(_))));
}

#[test]
fn repeated_backward_accumulates_into_params() {
    let mut p = ParamSet::new();
    p.push("w", Tensor::from_vec(vec![1.0, -1.0]).unwrap());
    for _ in 0..2 {
        let t = Tape::new();
        let vars = p.bind(&t);
        let loss = vars[0].square().unwrap().sum().unwrap();
        let g = t.backward(loss).unwrap();
        p.accumulate(&g, &vars).unwrap();
    }
    assert_eq!(p.get(0).grad().unwrap(), &[4.0, -4.0]);
    p.zero_grad();
    assert!(p.get(0).grad().is_none());
}

#[test]
fn frozen_binding_skips_weight_gradients() {
    let mut p = ParamSet::new();
    p.push("w", Tensor::from_vec(vec![2.0]).unwrap());
    let t = Tape::new();
    let x = v(&t, vec![1], &[3.0], true);
    let vars = p.bind_frozen(&t);
    let loss = x.mul(vars[0]).unwrap().sum().unwrap();
    let g = t.backward(loss).unwrap();
    assert!(g.get(vars[0]).is_none());
    assert_eq!(g.wrt(x), vec![2.0]);
}

#[test]
fn reductions() {
    let t = Tape::new();
    let x = v(&t, vec![2, 3], &[1.0, 5.0, 3.0, 4.0, 2.0, 6.0], true);
    assert_eq!(x.sum_axes(&[0]).unwrap().value(), vec![5.0, 7.0, 9.0]);
    assert_eq!(x.mean_axes(&[1]).unwrap().value(), vec![3.0, 4.0]);
    let m = x.max_axes(&[1]).unwrap();
    assert_eq!(m.value(), vec![5.0, 6.0]);
    let g = t.backward(m.sum().unwrap()).unwrap();
    assert_eq!(g.wrt(x), vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    assert!(x.sum_axes(&[2]).is_err());
}

#[test]
fn structural_ops() {
    let t = Tape::new();
    let x = v(&t, vec![5], &[1.0, 2.0, 3.0, 4.0, 5.0], true);
    assert_eq!(
        x.pad_reflect(2, 1).unwrap().value(),
        vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 5.0, 4.0]
    );
    assert_eq!(
        x.frames(3, 2).unwrap().value(),
        vec![1.0, 2.0, 3.0, 3.0, 4.0, 5.0]
    );
    assert_eq!(x.slice(1, 2).unwrap().value(), vec![2.0, 3.0]);
    let f = x.frames(3, 2).unwrap();
    let g = t.backward(f.sum().unwrap()).unwrap();
    assert_eq!(g.wrt(x), vec![1.0, 1.0, 2.0, 1.0, 1.0]);
    assert!(x.frames(6, 1).is_err());
    let m = v(&t, vec![2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], false);
    assert_eq!(
        m.transpose().unwrap().value(),
        vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]
    );
    assert_eq!(m.pick(&[2, 0]).unwrap().value(), vec![3.0, 4.0]);
    assert!(m.pick(&[3, 0]).is_err());
}

#[test]
fn magnitude_at_zero_has_zero_gradient() {
    let t = Tape::new();
    let re = v(&t, vec![2], &[0.0, 3.0], true);
    let im = v(&t, vec![2], &[0.0, 4.0], true);
    let m = re.magnitude(im).unwrap();
    assert_eq!(m.value(), vec![0.0, 5.0]);
    let g = t.backward(m.sum().unwrap()).unwrap();
    assert_eq!(g.wrt(re), vec![0.0, 0.6]);
    assert_eq!(g.wrt(im), vec![0.0, 0.8]);
}

#[test]
fn guarded_division() {
    let t = Tape::new();
    let a = v(&t, vec![2], &[1.0, 6.0], false);
    let b = v(&t, vec![2], &[0.0, 3.0], false);
    let y = a.div(b).unwrap().value();
    assert_eq!(y[0], 1.0 / EPS);
    assert_eq!(y[1], 2.0);
}
