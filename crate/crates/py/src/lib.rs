use pyo3::prelude::*;

#[pymodule]
fn tokensim_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
