use super::{CellError, CellKind};

/// Full adder from the parity and majority form: `(sum, cout)`.
pub fn adder_direct(a: bool, b: bool, cin: bool) -> (bool, bool) {
    let sum = (a ^ b) ^ cin;
    let cout = (a && b) || (cin && (a ^ b));
    (sum, cout)
}

/// Full adder from the half-sum decomposition with `H = a ⊕ b`:
/// `sum = H·cin' + H'·cin`, `cout = a·H' + cin·H`.
pub fn adder_decomposed(a: bool, b: bool, cin: bool) -> (bool, bool) {
    let h = a ^ b;
    let sum = (h && !cin) || (!h && cin);
    let cout = (a && !h) || (cin && h);
    (sum, cout)
}

/// Expected output bits of a cell, in the order of [`CellKind::outputs`].
pub fn oracle(kind: CellKind, inputs: &[bool]) -> Result<Vec<bool>, CellError> {
    let expected = kind.inputs().len();
    if inputs.len() != expected {
        return Err(CellError::Arity {
            cell: kind,
            expected,
            found: inputs.len(),
        });
    }
    Ok(match kind {
        CellKind::Xnor3t | CellKind::CmosXnorRef => vec![!(inputs[0] ^ inputs[1])],
        CellKind::XnorXor5t => {
            let x = inputs[0] ^ inputs[1];
            vec![!x, x]
        }
        CellKind::Adder8t => {
            let (a, b, c) = (inputs[0], inputs[1], inputs[2]);
            let direct = adder_direct(a, b, c);
            if adder_decomposed(a, b, c) != direct {
                return Err(CellError::OracleMismatch { inputs: inputs.to_vec() });
            }
            vec![direct.0, direct.1]
        }
        CellKind::Inverter => vec![!inputs[0]],
    })
}
