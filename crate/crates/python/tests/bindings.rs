use std::ffi::CString;

use pyo3::prelude::*;

use isic_engine::isic_engine;

fn run(code: &str) -> PyResult<()> {
    pyo3::append_to_inittab!(isic_engine);
    Python::initialize();
    Python::attach(|py| {
        let code = CString::new(code).unwrap();
        py.run(&code, None, None)
    })
}

#[test]
fn module_exposes_core_operations() {
    run(r#"
import math
import isic_engine as ie

tax = ie.Taxonomy.parse("level,code,parent,description\nsection,F,,Construction\ndivision,43,F,Specialized construction activities\ngroup,431,43,Demolition and site preparation\nclass,4311,431,Demolition\n")
assert len(tax) == 4
assert tax.ancestors("4311") == ["431", "43", "F"]
assert ie.division_of("4311") == "43"

p = ie.HashingProvider(8)
assert p.embed("aa") == [0.0] * 7 + [1.0]
assert abs(ie.cosine_similarity([1.0, 0.0], [1.0, 1.0]) - 1 / math.sqrt(2)) < 1e-12

r = ie.classification_report(["A", "A", "B"], ["A", "B", "B"], ["A", "B", "C"])
assert abs(r["one_vs_rest_accuracy"] - 7 / 9) < 1e-12

head = ie.Head.train([[1.0, 0.0], [0.0, 1.0]], ["4311", "4312"], ["4311", "4312", "4321"], epochs=1)
assert abs(head.step_losses[0] - math.log(3)) < 1e-9

try:
    ie.Taxonomy.parse("")
    raise AssertionError("expected ValueError")
except ValueError:
    pass
"#)
    .unwrap();
}
