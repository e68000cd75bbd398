//! Temperature-scaled surprisal, entropies and KL on a toy distribution.
//!
//! cargo run --example surprisal_kernels

use tempsurp::distrib::{
    kl_divergence, renyi_entropy, shannon_entropy, softmax_t, surprisal_t, LogitVector, ProbVector, RenyiOrder,
    Temperature,
};

fn main() -> tempsurp::Result<()> {
    // five classes, gold = 0; the second vector puts zero mass on three classes
    let flat = LogitVector::from_probs(&[0.8, 0.05, 0.05, 0.05, 0.05])?;
    let sparse = LogitVector::from_probs(&[0.8, 0.2, 0.0, 0.0, 0.0])?;

    println!("{:>6} {:>10} {:>10} {:>8}", "T", "s(flat)", "s(sparse)", "gap");
    for t in [1.0, 1.5, 2.0, 2.5, 5.0, 10.0, 1e9] {
        let t = Temperature::new(t)?;
        let a = surprisal_t(&flat, 0, t)?.bits;
        let b = surprisal_t(&sparse, 0, t)?.bits;
        println!("{:>6} {:>10.4} {:>10.4} {:>8.4}", t.value(), a, b, a - b);
    }
    println!("log2 K = {:.4}", 5f64.log2());

    let p = ProbVector::new(vec![0.8, 0.2, 0.0, 0.0, 0.0])?;
    for alpha in [0.0, 0.5, 1.0] {
        println!("H_{alpha} = {:.4} bits", renyi_entropy(&p, RenyiOrder::new(alpha)?));
    }
    println!("H(T=2) of flat = {:.4} bits", shannon_entropy(&flat, Temperature::new(2.0)?));

    let z = LogitVector::from_probs(&[0.8, 0.2])?;
    let p1 = softmax_t(&z, Temperature::new(1.0)?);
    let p2 = softmax_t(&z, Temperature::new(2.0)?);
    println!("softmax_2([0.8, 0.2]) = {:?}", p2.as_slice());
    println!("KL(T=1 || T=2) = {:.4} bits", kl_divergence(&p1, &p2)?);
    Ok(())
}
