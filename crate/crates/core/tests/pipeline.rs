//! Plan-driven end-to-end runs: zero-overhead layer boundaries, layout
//! handover through branchy topologies, and reference-path agreement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mapconv_core::analyzer::argmax;
use mapconv_core::engine::{
    build_execution_plan, run_network, ArithmeticMode, ModeSpec, PlanConfig,
};
use mapconv_core::layout::{reorder_to_map_major, reorder_weights};
use mapconv_core::model::{
    parse_network_description, LayerParams, NetworkModel, ParamOrdering, ParameterSet,
};
use mapconv_core::tensor::{Tensor, TensorShape};

fn random_params_for(model: &NetworkModel, rng: &mut ChaCha8Rng) -> ParameterSet {
    let mut entries = Vec::new();
    for (idx, wcount, bcount) in model.parameter_layers() {
        entries.push((
            model.layers()[idx].name.clone(),
            LayerParams {
                weights: (0..wcount).map(|_| rng.gen_range(-0.5f32..0.5)).collect(),
                biases: (0..bcount).map(|_| rng.gen_range(-0.5f32..0.5)).collect(),
            },
        ));
    }
    ParameterSet::new(ParamOrdering::Original, entries)
}

fn random_input(model: &NetworkModel, rng: &mut ChaCha8Rng) -> Tensor {
    let shape = model.input_shape();
    Tensor::row_major(
        shape,
        (0..shape.elements()).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
    )
    .unwrap()
}

fn max_rel_error(got: &[f32], want: &[f32]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(&g, &w)| ((g - w).abs() as f64) / (w.abs().max(1.0) as f64))
        .fold(0.0, f64::max)
}

#[test]
fn two_conv_chain_has_zero_interior_reorders() {
    let model = parse_network_description(
        "input 3 10 10\n\
         conv c1 pred=input N=3 M=5 K=3 S=1 P=1\n\
         conv c2 pred=c1 N=5 M=4 K=3 S=1 P=1\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = random_params_for(&model, &mut rng);
    let input = random_input(&model, &mut rng);

    let plan = build_execution_plan(
        &model,
        &PlanConfig::global(ArithmeticMode::Relaxed, 4, 2),
    )
    .unwrap();
    let result = run_network(&plan, &model, &params, &input).unwrap();
    assert_eq!(result.reorders.entry, 1);
    assert_eq!(result.reorders.interior, 0);
    assert_eq!(result.reorders.exit, 1);

    // The terminal map-major buffer equals the reordered reference output.
    let reference = run_network(
        &build_execution_plan(&model, &PlanConfig::global(ArithmeticMode::Precise, 4, 1)).unwrap(),
        &model,
        &params,
        &input,
    )
    .unwrap();
    let expected = reorder_to_map_major(&reference.output, 4).unwrap();
    let buffer = result.terminal_map_major.unwrap();
    let err = max_rel_error(buffer.data(), expected.data());
    assert!(err <= 1e-5, "rel err {err}");
    // And the row-major results agree within the same tolerance.
    let err = max_rel_error(result.output.data(), reference.output.data());
    assert!(err <= 1e-5, "rel err {err}");
}

#[test]
fn fire_micro_net_argmax_matches_reference() {
    // Squeeze 1x1 -> parallel expand 1x1 and 3x3 -> concat -> fc -> softmax.
    let model = parse_network_description(
        "input 4 8 8\n\
         conv squeeze pred=input N=4 M=3 K=1 S=1 P=0\n\
         relu sq_relu pred=squeeze\n\
         conv exp1 pred=sq_relu N=3 M=4 K=1 S=1 P=0\n\
         conv exp3 pred=sq_relu N=3 M=4 K=3 S=1 P=1\n\
         concat cat pred=exp1,exp3\n\
         relu cat_relu pred=cat\n\
         fc logits pred=cat_relu M=5\n\
         softmax probs pred=logits\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = random_params_for(&model, &mut rng);

    let reference_plan =
        build_execution_plan(&model, &PlanConfig::global(ArithmeticMode::Precise, 4, 1)).unwrap();
    let vector_plan =
        build_execution_plan(&model, &PlanConfig::global(ArithmeticMode::Imprecise, 4, 2)).unwrap();

    for trial in 0..100 {
        let input = random_input(&model, &mut rng);
        let reference = run_network(&reference_plan, &model, &params, &input).unwrap();
        let vectorized = run_network(&vector_plan, &model, &params, &input).unwrap();
        assert_eq!(
            argmax(reference.output.data()),
            argmax(vectorized.output.data()),
            "trial {trial}"
        );
    }
}

#[test]
fn reordered_parameters_give_same_results_as_original() {
    let model = parse_network_description(
        "input 2 6 6\n\
         conv c1 pred=input N=2 M=6 K=3 S=1 P=1\n\
         relu r1 pred=c1\n\
         conv c2 pred=r1 N=6 M=3 K=3 S=2 P=0\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = random_params_for(&model, &mut rng);
    let input = random_input(&model, &mut rng);
    let reordered = reorder_weights(&model, &params, 4).unwrap();

    let plan =
        build_execution_plan(&model, &PlanConfig::global(ArithmeticMode::Imprecise, 4, 2)).unwrap();
    let from_original = run_network(&plan, &model, &params, &input).unwrap();
    let from_reordered = run_network(&plan, &model, &reordered, &input).unwrap();
    assert_eq!(from_original.output.data(), from_reordered.output.data());

    // The scalar path restores original ordering from CPPR data.
    let precise_plan =
        build_execution_plan(&model, &PlanConfig::global(ArithmeticMode::Precise, 4, 1)).unwrap();
    let scalar_from_original = run_network(&precise_plan, &model, &params, &input).unwrap();
    let scalar_from_reordered = run_network(&precise_plan, &model, &reordered, &input).unwrap();
    assert_eq!(
        scalar_from_original.output.data(),
        scalar_from_reordered.output.data()
    );
}

#[test]
fn mixed_plan_reorders_at_the_declared_boundary() {
    let model = parse_network_description(
        "input 3 8 8\n\
         conv c1 pred=input N=3 M=4 K=3 S=1 P=1\n\
         conv c2 pred=c1 N=4 M=4 K=3 S=1 P=1\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = random_params_for(&model, &mut rng);
    let input = random_input(&model, &mut rng);

    let plan = build_execution_plan(
        &model,
        &PlanConfig {
            u: 4,
            workers: 2,
            modes: ModeSpec::PerLayer(vec![
                ArithmeticMode::Precise,
                ArithmeticMode::Precise,
                ArithmeticMode::Imprecise,
            ]),
        },
    )
    .unwrap();
    assert_eq!(plan.reorder_boundaries(&model).len(), 1);
    let result = run_network(&plan, &model, &params, &input).unwrap();
    // c1 runs scalar row-major; one interior reorder feeds c2 map-major.
    assert_eq!(result.reorders.entry, 0);
    assert_eq!(result.reorders.interior, 1);
    assert_eq!(result.reorders.exit, 1);
}

#[test]
fn pooling_network_runs_in_both_layouts() {
    let model = parse_network_description(
        "input 3 8 8\n\
         conv c1 pred=input N=3 M=5 K=3 S=1 P=1\n\
         relu r1 pred=c1\n\
         maxpool p1 pred=r1 K=2 S=2\n\
         avgpool p2 pred=p1 K=2 S=2\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = random_params_for(&model, &mut rng);
    let input = random_input(&model, &mut rng);

    let reference = run_network(
        &build_execution_plan(&model, &PlanConfig::global(ArithmeticMode::Precise, 4, 1)).unwrap(),
        &model,
        &params,
        &input,
    )
    .unwrap();
    let vectorized = run_network(
        &build_execution_plan(&model, &PlanConfig::global(ArithmeticMode::Relaxed, 4, 2)).unwrap(),
        &model,
        &params,
        &input,
    )
    .unwrap();
    assert_eq!(reference.output.shape(), TensorShape::new(5, 2, 2).unwrap());
    let err = max_rel_error(vectorized.output.data(), reference.output.data());
    assert!(err <= 1e-5, "rel err {err}");
    // Pools and relu are layout-preserving: no interior reorders.
    assert_eq!(vectorized.reorders.interior, 0);
}

#[test]
fn worker_counts_do_not_change_network_output() {
    let model = parse_network_description(
        "input 3 9 9\n\
         conv c1 pred=input N=3 M=7 K=3 S=1 P=1\n\
         conv c2 pred=c1 N=7 M=4 K=3 S=2 P=1\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = random_params_for(&model, &mut rng);
    let input = random_input(&model, &mut rng);

    let mut outputs = Vec::new();
    for workers in [1usize, 2, 8] {
        let plan = build_execution_plan(
            &model,
            &PlanConfig::global(ArithmeticMode::Imprecise, 4, workers),
        )
        .unwrap();
        outputs.push(run_network(&plan, &model, &params, &input).unwrap().output);
    }
    assert_eq!(outputs[0].data(), outputs[1].data());
    assert_eq!(outputs[1].data(), outputs[2].data());
}
