/// Margin rule: keep a trajectory if it succeeded, or if its success bit
/// beats the predicted instruction value by more than `threshold`.
pub fn keep_by_margin(success: bool, inst_value: f64, threshold: f64) -> bool {
    let s = if success { 1.0 } else { 0.0 };
    success || s - inst_value > threshold
}

/// Applies [`keep_by_margin`] to each item; `success` reads the item's
/// success bit and `inst_values` holds the predictions, index for index.
pub fn instruction_filter<T>(
    items: Vec<T>,
    success: impl Fn(&T) -> bool,
    inst_values: &[f64],
    threshold: f64,
) -> Vec<T> {
    assert_eq!(items.len(), inst_values.len(), "one prediction per item");
    items
        .into_iter()
        .zip(inst_values)
        .filter(|(item, &v)| keep_by_margin(success(item), v, threshold))
        .map(|(item, _)| item)
        .collect()
}
