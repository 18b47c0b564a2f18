use replaycl_web::demo::{continual_run, gan_losses, selection_playground};

#[test]
fn per_class_schemes_fill_every_class() {
    for scheme in ["l2_labels", "l1_cmean"] {
        let v = selection_playground(1, scheme, 5, 200).unwrap();
        assert_eq!(v["per_class"], serde_json::json!([5, 5, 5]), "{scheme}");
        assert_eq!(v["points"].as_array().unwrap().len(), 200);
    }
}

#[test]
fn global_scheme_leaves_classes_uncovered() {
    let v = selection_playground(1, "l1_bmean", 5, 200).unwrap();
    let counts: Vec<u64> = v["per_class"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).collect();
    assert_eq!(counts.iter().sum::<u64>(), 10);
    assert!(counts.contains(&0), "{counts:?}");
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(selection_playground(1, "nearest", 5, 10).is_err());
    assert!(selection_playground(1, "l1_cmean", 0, 10).is_err());
    assert!(gan_losses(1, 0, "fml").is_err());
    assert!(gan_losses(1, 2, "mse").is_err());
    assert!(continual_run(1, "replay").is_err());
}

#[test]
fn gan_curves_have_one_point_per_epoch() {
    let a = gan_losses(3, 3, "fml").unwrap();
    assert_eq!(a["d_loss"].as_array().unwrap().len(), 3);
    assert_eq!(a["g_loss"].as_array().unwrap().len(), 3);
    assert_eq!(a, gan_losses(3, 3, "fml").unwrap());
}

#[test]
fn continual_run_reports_each_task() {
    let v = continual_run(2, "malcl").unwrap();
    assert_eq!(v["label"], "malcl/l1_cmean/fml");
    assert_eq!(v["seen"], serde_json::json!([2, 4, 6]));
    assert!(v["coverage"][0].is_null() && v["coverage"][1].is_number());
    let none = continual_run(2, "none").unwrap();
    assert_eq!(none["accuracy"][0], v["accuracy"][0]);
}
