use pyo3::prelude::*;
#[pymodule]
fn nifs_py(_m: &Bound<PyModule>) -> PyResult<()> { Ok(()) }
