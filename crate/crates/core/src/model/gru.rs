//! Gated recurrent unit over row batches.
//!
//! `z = σ(x W_z + b_z + h U_z)`, `r = σ(x W_r + b_r + h U_r)`,
//! `n = tanh(x W_n + b_n + (r ⊙ h) U_n)`, `h' = z ⊙ h + (1 − z) ⊙ n`.

use crate::engine::{EngineError, ParamId, ParamSet, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::scalar::Scalar;

const GATES: [&str; 9] = ["w_z", "w_r", "w_n", "u_z", "u_r", "u_n", "b_z", "b_r", "b_n"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruIds {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_n: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_n: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_n: ParamId,
}

impl GruIds {
    pub(crate) fn register<S: Scalar>(
        params: &mut ParamSet<S>,
        prefix: &str,
        input: usize,
        hidden: usize,
        init_bound: f64,
        rng: &mut Rng,
    ) -> Result<Self, EngineError> {
        let mut ids = Vec::with_capacity(9);
        for gate in GATES {
            let rows = match gate.as_bytes()[0] {
                b'w' => input,
                b'u' => hidden,
                _ => 1,
            };
            let value = Tensor::uniform(vec![rows, hidden], init_bound, rng);
            ids.push(params.insert(format!("{prefix}.{gate}"), value)?);
        }
        Ok(Self::from_slice(&ids))
    }

    /// Looks the nine tensors up by name and checks their shapes.
    pub(crate) fn locate<S: Scalar>(params: &ParamSet<S>, prefix: &str) -> Result<(Self, usize, usize), String> {
        let mut ids = Vec::with_capacity(9);
        for gate in GATES {
            let name = format!("{prefix}.{gate}");
            ids.push(params.id(&name).ok_or_else(|| format!("missing parameter `{name}`"))?);
        }
        let g = Self::from_slice(&ids);
        let w = params.get(g.w_z).shape();
        if w.len() != 2 {
            return Err(format!("`{prefix}.w_z` must be a matrix"));
        }
        let (input, hidden) = (w[0], w[1]);
        for (gate, id) in GATES.iter().zip(&ids) {
            let rows = match gate.as_bytes()[0] {
                b'w' => input,
                b'u' => hidden,
                _ => 1,
            };
            if params.get(*id).shape() != [rows, hidden] {
                return Err(format!(
                    "`{prefix}.{gate}` has shape {:?}, expected {:?}",
                    params.get(*id).shape(),
                    [rows, hidden]
                ));
            }
        }
        Ok((g, input, hidden))
    }

    fn from_slice(ids: &[ParamId]) -> Self {
        Self {
            w_z: ids[0],
            w_r: ids[1],
            w_n: ids[2],
            u_z: ids[3],
            u_r: ids[4],
            u_n: ids[5],
            b_z: ids[6],
            b_r: ids[7],
            b_n: ids[8],
        }
    }

    pub(crate) fn vars(&self, all: &[Var]) -> GruVars {
        GruVars {
            w_z: all[self.w_z.0],
            w_r: all[self.w_r.0],
            w_n: all[self.w_n.0],
            u_z: all[self.u_z.0],
            u_r: all[self.u_r.0],
            u_n: all[self.u_n.0],
            b_z: all[self.b_z.0],
            b_r: all[self.b_r.0],
            b_n: all[self.b_n.0],
        }
    }
}

/// GRU weights registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    w_z: Var,
    w_r: Var,
    w_n: Var,
    u_z: Var,
    u_r: Var,
    u_n: Var,
    b_z: Var,
    b_r: Var,
    b_n: Var,
}

/// Input-side gate pre-activations `x W + b` for a batch of rows.
#[derive(Debug, Clone, Copy)]
pub struct GateInputs {
    z: Var,
    r: Var,
    n: Var,
}

impl GruVars {
    pub fn project<S: Scalar>(&self, tape: &mut Tape<S>, x: Var) -> Result<GateInputs, EngineError> {
        Ok(GateInputs {
            z: tape.affine(x, self.w_z, self.b_z)?,
            r: tape.affine(x, self.w_r, self.b_r)?,
            n: tape.affine(x, self.w_n, self.b_n)?,
        })
    }

    /// Rows `start .. start + len` of projected inputs.
    pub fn slice<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        inputs: GateInputs,
        start: usize,
        len: usize,
    ) -> Result<GateInputs, EngineError> {
        Ok(GateInputs {
            z: tape.slice_rows(inputs.z, start, len)?,
            r: tape.slice_rows(inputs.r, start, len)?,
            n: tape.slice_rows(inputs.n, start, len)?,
        })
    }

    /// One recurrence step for every row of `h`.
    pub fn step<S: Scalar>(&self, tape: &mut Tape<S>, x: GateInputs, h: Var) -> Result<Var, EngineError> {
        let hz = tape.matmul(h, self.u_z)?;
        let z_pre = tape.add(x.z, hz)?;
        let z = tape.sigmoid(z_pre);
        let hr = tape.matmul(h, self.u_r)?;
        let r_pre = tape.add(x.r, hr)?;
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, h)?;
        let hn = tape.matmul(rh, self.u_n)?;
        let n_pre = tape.add(x.n, hn)?;
        let n = tape.tanh(n_pre);
        let keep = tape.mul(z, h)?;
        let one_minus_z = tape.one_minus(z);
        let update = tape.mul(one_minus_z, n)?;
        tape.add(keep, update)
    }
}
