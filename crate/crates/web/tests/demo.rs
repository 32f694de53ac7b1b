use metaopt_web::Demo;

#[test]
fn reference_and_kind() {
    let demo = Demo::new(3).unwrap();
    assert!(["circle", "sine", "lemniscate"].contains(&demo.kind().as_str()));
    assert_eq!(demo.reference().len(), 2 * 32);
}

#[test]
fn mppi_run_shapes_and_improvement() {
    let demo = Demo::new(1).unwrap();
    let run = demo.run_mppi(32, 1.0, 20).unwrap();
    assert_eq!(run.xs().len(), 32);
    assert_eq!(run.errors().len(), 31);
    assert_eq!(run.costs().len(), 21);
    assert!(run.costs()[20] < run.costs()[0]);
    assert!(run.mean_error().is_finite());
}

#[test]
fn training_changes_the_learned_run() {
    let mut demo = Demo::new(2).unwrap();
    let before = demo.run_learned().unwrap();
    let ret = demo.train(5, true).unwrap();
    assert!(ret.is_finite());
    assert_eq!(demo.trained_iterations(), 5);
    assert_eq!(demo.returns().len(), 5);
    let after = demo.run_learned().unwrap();
    assert_ne!(before.xs(), after.xs());
}

#[test]
fn same_seed_same_demo() {
    let a = Demo::new(9).unwrap().run_mppi(8, 1.0, 5).unwrap();
    let b = Demo::new(9).unwrap().run_mppi(8, 1.0, 5).unwrap();
    assert_eq!(a.xs(), b.xs());
    assert_eq!(a.costs(), b.costs());
}
