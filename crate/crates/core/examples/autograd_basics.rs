//! Records a small conv/pool/dense graph on a tape, runs the backward pass
//! and compares one gradient with central differences.
//!
//!     cargo run --release --example autograd_basics

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hisunet::autograd::grad_check;
use hisunet::{GridTensor, Tape};

fn main() -> hisunet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = GridTensor::uniform([2, 3, 8, 8], 1.0, &mut rng);
    let k = GridTensor::uniform([4, 3, 3, 3], 0.5, &mut rng);
    let w = GridTensor::uniform([2, 4 * 4 * 4, 1, 1], 0.5, &mut rng);

    let graph = |t: &mut Tape, kv| -> hisunet::Result<_> {
        let xv = t.constant(x.clone());
        let h = t.conv2d(xv, kv, None)?;
        let h = t.tanh(h);
        let h = t.maxpool2d(h)?;
        let h = t.reshape(h, [2, 4 * 4 * 4, 1, 1])?;
        let wv = t.constant(w.clone());
        let y = t.dense(h, wv, None)?;
        let sq = t.mul(y, y)?;
        Ok(t.sum(sq))
    };

    let mut tape = Tape::new();
    let kv = tape.param(k.clone());
    let loss = graph(&mut tape, kv)?;
    tape.backward(loss)?;
    let g = tape.grad(kv).expect("kernel gradient");
    println!("loss {:.6}", tape.value(loss).data()[0]);
    println!("|dL/dkernel| = {:.6}", g.dot(g).sqrt());
    println!("tape holds {} nodes", tape.len());

    let err = grad_check(graph, &k, 1e-5)?;
    println!("max relative error against central differences: {err:.2e}");
    Ok(())
}
