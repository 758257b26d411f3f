//! Property-based invariants for the layout, file-format, and shape logic.

use proptest::prelude::*;

use mapconv_core::layout::{
    coords_map_major, reorder_from_map_major, reorder_to_map_major, ThreadIndex,
};
use mapconv_core::model::{
    parse_model_parameters, parse_network_description, write_model_parameters, LayerParams,
    ParamOrdering, ParameterSet,
};
use mapconv_core::tensor::{pad_channels, Tensor, TensorShape};

fn arb_tensor() -> impl Strategy<Value = Tensor> {
    (1usize..=17, 1usize..=9, 1usize..=9).prop_flat_map(|(c, h, w)| {
        let shape = TensorShape::new(c, h, w).unwrap();
        proptest::collection::vec(-1.0f32..1.0, shape.elements())
            .prop_map(move |data| Tensor::row_major(shape, data).unwrap())
    })
}

proptest! {
    #[test]
    fn reorder_round_trip_is_bitwise_identity(
        tensor in arb_tensor(),
        u_exp in 0usize..=4,
    ) {
        let u = 1usize << u_exp;
        let forward = reorder_to_map_major(&tensor, u).unwrap();
        let back = reorder_from_map_major(&forward).unwrap();
        prop_assert_eq!(back.shape(), tensor.shape());
        prop_assert_eq!(back.data(), tensor.data());
    }

    #[test]
    fn map_major_coordinates_form_a_bijection(
        u_exp in 0usize..=4,
        stacks in 1usize..=8,
        h_out in 1usize..=10,
        w_out in 1usize..=10,
    ) {
        let u = 1usize << u_exp;
        let m_padded = stacks * u;
        let alpha = m_padded * h_out * w_out;
        prop_assume!(alpha <= 10_000);
        let mut seen = vec![false; alpha];
        for x in 0..alpha {
            let c = coords_map_major(ThreadIndex { x, alpha }, u, w_out, h_out).unwrap();
            prop_assert!(c.m < m_padded && c.h < h_out && c.w < w_out);
            let idx = (c.m * h_out + c.h) * w_out + c.w;
            prop_assert!(!seen[idx], "duplicate coordinate at task {}", x);
            seen[idx] = true;
        }
    }

    #[test]
    fn padded_channel_count_is_smallest_multiple(
        channels in 1usize..=100,
        u_exp in 0usize..=4,
    ) {
        let u = 1usize << u_exp;
        let padded = pad_channels(channels, u);
        prop_assert!(padded >= channels);
        prop_assert_eq!(padded % u, 0);
        prop_assert!(padded - channels < u);
    }

    #[test]
    fn parameter_file_round_trips(values in proptest::collection::vec(-10.0f32..10.0, 66)) {
        // conv: 2*3*3*3 = 54 weights + 3 biases; fc over 3x1x1: 3*3 = 9 + 3.
        let model = parse_network_description(
            "input 2 3 3\n\
             conv c1 pred=input N=2 M=3 K=3 S=1 P=1\n\
             maxpool p1 pred=c1 K=3 S=1\n\
             fc f1 pred=p1 M=3\n",
        ).unwrap();
        let params = ParameterSet::new(
            ParamOrdering::Original,
            vec![
                ("c1".to_string(), LayerParams {
                    weights: values[..54].to_vec(),
                    biases: values[54..57].to_vec(),
                }),
                ("f1".to_string(), LayerParams {
                    weights: values[57..66].to_vec(),
                    biases: values[..3].to_vec(),
                }),
            ],
        );
        let mut bytes = Vec::new();
        write_model_parameters(&mut bytes, &params).unwrap();
        let parsed = parse_model_parameters(bytes.as_slice(), &model).unwrap();
        for (a, b) in parsed.entries().iter().zip(params.entries()) {
            prop_assert_eq!(&a.0, &b.0);
            prop_assert_eq!(&a.1.weights, &b.1.weights);
            prop_assert_eq!(&a.1.biases, &b.1.biases);
        }
        // Re-serializing is byte-identical.
        let mut again = Vec::new();
        write_model_parameters(&mut again, &parsed).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn conv_output_size_never_grows_with_stride(
        dim in 1usize..=64,
        k in 1usize..=5,
        p in 0usize..=2,
    ) {
        prop_assume!(dim + 2 * p >= k);
        let out = |s: usize| (dim + 2 * p - k) / s + 1;
        for s in 1..4 {
            prop_assert!(out(s + 1) <= out(s));
        }
    }
}
