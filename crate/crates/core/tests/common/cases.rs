//! Finite-difference cases shared by the gradient suites and the acceptance
//! run. Each returns `(label, max relative error)`.

use odvsr::models::{build, Network};
use odvsr::tensor::{ConvGeometry, Tensor};

use super::{gradcheck, gradcheck_piecewise, project, random};

/// Every differentiable tape operation at 64-bit precision.
pub fn op_cases() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut push = |name: &str, err: f64| out.push((name.to_string(), err));

    let convs = [
        ("conv2d plain", [1, 2, 5, 5], [3, 2, 3, 3], ConvGeometry::new(1, 1, 1)),
        ("conv2d strided", [2, 2, 7, 6], [4, 2, 3, 3], ConvGeometry::new(2, 1, 1)),
        ("conv2d grouped", [1, 4, 6, 6], [4, 2, 3, 3], ConvGeometry::new(1, 1, 2)),
        ("conv2d depthwise", [1, 3, 5, 4], [3, 1, 3, 3], ConvGeometry::new(1, 1, 3)),
        ("conv2d pointwise", [2, 3, 4, 4], [5, 3, 1, 1], ConvGeometry::default()),
        ("conv2d wide", [1, 2, 9, 9], [2, 2, 7, 7], ConvGeometry::new(2, 3, 1)),
    ];
    for (i, (name, xd, wd, g)) in convs.into_iter().enumerate() {
        let seed = 10 * i as u64;
        let bias = random([1, wd[0], 1, 1], seed + 2);
        let err = gradcheck(&[random(xd, seed), random(wd, seed + 1), bias], None, |t, v| {
            let y = t.conv2d(&v[0], &v[1], Some(&v[2]), g)?;
            project(t, &y, 99)
        });
        push(name, err);
    }
    let err = gradcheck(&[random([1, 2, 5, 5], 1), random([2, 2, 3, 3], 2)], None, |t, v| {
        let y = t.conv2d(&v[0], &v[1], None, ConvGeometry::same(3))?;
        t.sum(&y)
    });
    push("sum(conv2d)", err);

    for (stride, pad, opad) in [(1, 0, 0), (2, 1, 1), (3, 4, 2)] {
        let inputs = [
            random([1, 3, 4, 5], 3),
            random([3, 2, 5, 5], 4),
            random([1, 2, 1, 1], 5),
        ];
        let err = gradcheck(&inputs, None, |t, v| {
            let y = t.conv_transpose2d(&v[0], &v[1], Some(&v[2]), stride, pad, opad)?;
            project(t, &y, 7)
        });
        push(&format!("conv_transpose2d s{stride} p{pad} op{opad}"), err);
    }

    let err = gradcheck(&[random([2, 8, 3, 2], 6)], None, |t, v| {
        let y = t.pixel_shuffle(&v[0], 2)?;
        project(t, &y, 8)
    });
    push("pixel_shuffle", err);
    let err = gradcheck(&[random([1, 3, 3, 4], 9)], None, |t, v| {
        let y = t.repeat_channels(&v[0], 4)?;
        project(t, &y, 10)
    });
    push("repeat_channels", err);
    let err = gradcheck(&[random([2, 5, 3, 3], 11)], None, |t, v| {
        let y = t.slice_channels(&v[0], 1, 3)?;
        project(t, &y, 12)
    });
    push("slice_channels", err);
    let err = gradcheck(&[random([2, 2, 3, 3], 13), random([2, 3, 3, 3], 14)], None, |t, v| {
        let y = t.concat_channels(&[&v[0], &v[1], &v[0]])?;
        project(t, &y, 15)
    });
    push("concat_channels", err);

    let x = random([1, 3, 4, 4], 16);
    let err = gradcheck(&[x.clone()], None, |t, v| {
        let y = t.gelu(&v[0])?;
        project(t, &y, 17)
    });
    push("gelu", err);
    let err = gradcheck(&[x.clone()], None, |t, v| {
        let y = t.relu(&v[0])?;
        project(t, &y, 18)
    });
    push("relu", err);
    let err = gradcheck(&[x.clone()], None, |t, v| {
        let y = t.leaky_relu(&v[0], 0.1)?;
        project(t, &y, 19)
    });
    push("leaky_relu", err);
    let err = gradcheck(&[x, random([1, 3, 1, 1], 20)], None, |t, v| {
        let y = t.prelu(&v[0], &v[1])?;
        project(t, &y, 21)
    });
    push("prelu", err);

    let a = random([2, 2, 3, 3], 22);
    let b = random([2, 2, 3, 3], 23);
    let err = gradcheck(&[a.clone(), b], None, |t, v| {
        let s = t.add(&v[0], &v[1])?;
        let d = t.sub(&s, &v[1])?;
        let d = t.sub(&d, &v[1])?;
        let m = t.mul(&d, &v[0])?;
        let k = t.scale(&m, -1.7)?;
        project(t, &k, 24)
    });
    push("add/sub/mul/scale", err);
    let err = gradcheck(&[a.clone()], None, |t, v| {
        let y = t.abs(&v[0])?;
        t.mean(&y)
    });
    push("abs/mean", err);
    let err = gradcheck(&[a], None, |t, v| {
        let y = t.mul(&v[0], &v[0])?;
        t.sum(&y)
    });
    push("sum", err);

    let err = gradcheck(&[random([2, 2, 7, 5], 25)], None, |t, v| {
        let y = t.adaptive_max_pool(&v[0], 3, 2)?;
        project(t, &y, 26)
    });
    push("adaptive_max_pool", err);
    let err = gradcheck(&[random([1, 2, 3, 2], 27)], None, |t, v| {
        let y = t.upsample_nearest(&v[0], 7, 5)?;
        project(t, &y, 28)
    });
    push("upsample_nearest", err);

    let inputs = [
        random([2, 4, 3, 3], 29),
        random([1, 4, 1, 1], 30),
        random([1, 4, 1, 1], 31),
    ];
    let err = gradcheck(&inputs, None, |t, v| {
        let y = t.grn(&v[0], &v[1], &v[2])?;
        project(t, &y, 32)
    });
    push("grn", err);

    for dims in [[1, 2, 4, 4], [2, 1, 5, 3], [1, 1, 6, 7]] {
        let err = gradcheck(&[random(dims, 33)], None, |t, v| {
            let y = t.fft2_stack(&v[0])?;
            project(t, &y, 34)
        });
        push(&format!("fft2_stack {dims:?}"), err);
        let [n, c, h, w] = dims;
        let err = gradcheck(&[random([n, 2 * c, h, w], 35)], None, |t, v| {
            let y = t.ifft2_real(&v[0])?;
            project(t, &y, 36)
        });
        push(&format!("ifft2_real {:?}", [n, 2 * c, h, w]), err);
    }

    let x = random([2, 3, 4, 5], 37);
    let y = random([2, 3, 4, 5], 38);
    let err = gradcheck(&[x.clone(), y.clone()], None, |t, v| t.charbonnier(&v[0], &v[1], 1e-3));
    push("charbonnier", err);
    let rows: Vec<f64> = (0..4).map(|i| 0.2 + 0.3 * i as f64).collect();
    let err = gradcheck(&[x, y], None, |t, v| t.weighted_l1(&v[0], &v[1], &rows));
    push("weighted_l1", err);
    out
}

/// Elements checked per parameter tensor (all of them for smaller tensors).
const NET_SAMPLE: usize = 6;

/// Whole-network check on a 1x3x16x16 input: gradients with respect to the
/// input and a sample of every parameter tensor.
///
/// Freshly initialised deep nets have zero biases and activations that shrink
/// layer by layer, so most pre-activations sit within a step width of a PReLU
/// kink. Biases are drawn at random here to check at a generic point, and
/// one-sided differences cover the rare step that still crosses a kink.
pub fn net_case(name: &str, scale: usize) -> f64 {
    let mut net: Network<f64> = Network::<f32>::new(build(name, scale).unwrap(), 11).unwrap().cast();
    let params = net
        .param_specs()
        .iter()
        .zip(net.params())
        .enumerate()
        .map(|(i, (spec, t))| match spec.name.ends_with("bias") {
            true => random(t.dims(), 100 + i as u64).map(|v| 0.2 * v),
            false => t.clone(),
        })
        .collect();
    net.set_params(params).unwrap();
    let mut inputs: Vec<Tensor<f64>> = vec![random([1, 3, 16, 16], 5).map(|v| 0.5 + 0.5 * v)];
    inputs.extend(net.params().cloned());
    gradcheck_piecewise(&inputs, Some(NET_SAMPLE), |tape, vars| {
        let y = net.forward_with(tape, &vars[1..], &vars[0])?;
        project(tape, &y, 99)
    })
}
