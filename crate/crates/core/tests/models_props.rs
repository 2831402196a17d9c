use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfscope_core::features::{FeatureVector, Lexicon};
use selfscope_core::models::{
    build_retrieval_index, classify_knn, decode_artifact, encode_artifact, logreg_gradient, logreg_objective,
    train_nb_multinomial, EmbeddingProvider, Example, FeatureResources, FeatureSource, Family, Hyperparameters,
    ModelArtifact, ModelSpec, Parameters, TrainedModel,
};
use selfscope_core::ontology::LabelPath;

fn problem(seed: u64, n: usize, d: usize) -> (Vec<FeatureVector>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..n)
        .map(|_| FeatureVector::from_dense(&(0..d).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>()).unwrap())
        .collect();
    let y = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    (x, y)
}

proptest! {
    #[test]
    fn logreg_gradient_matches_finite_differences(
        seed in any::<u64>(), n in 3usize..20, d in 1usize..6, lambda in 0.0f64..1.0,
    ) {
        let (x, y) = problem(seed, n, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let (gw, gb) = logreg_gradient(&x, &y, &w, b, lambda);
        let h = 1e-5;
        let mut fd = Vec::new();
        for j in 0..d {
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus[j] += h;
            minus[j] -= h;
            fd.push((logreg_objective(&x, &y, &plus, b, lambda) - logreg_objective(&x, &y, &minus, b, lambda)) / (2.0 * h));
        }
        fd.push((logreg_objective(&x, &y, &w, b + h, lambda) - logreg_objective(&x, &y, &w, b - h, lambda)) / (2.0 * h));
        let analytic: Vec<f64> = gw.iter().copied().chain([gb]).collect();
        let scale = analytic.iter().fold(1e-8f64, |m, g| m.max(g.abs()));
        let deviation = analytic.iter().zip(&fd).map(|(a, f)| (a - f).abs()).fold(0.0, f64::max) / scale;
        prop_assert!(deviation <= 1e-5, "deviation {deviation}");
    }

    #[test]
    fn logreg_probabilities_are_proper(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let (x, y) = problem(seed, 20, 3);
        let spec = ModelSpec::new(Family::Logreg, FeatureSource::Lexicon);
        let m = TrainedModel::train(&spec, &x, &y, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let q = FeatureVector::from_dense(&[scale * rng.gen_range(-10.0..10.0), 0.0, scale]).unwrap();
            let [p0, p1] = m.probabilities(&q).unwrap();
            prop_assert!(p1 > 0.0 && p1 < 1.0 && p0 > 0.0 && p0 < 1.0);
            prop_assert!((p0 + p1 - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn knn_full_index_uniform_similarity_is_majority(labels in prop::collection::vec(any::<bool>(), 1..15)) {
        prop_assume!(labels.len() % 2 == 1);
        let x: Vec<FeatureVector> = labels
            .iter()
            .enumerate()
            .map(|(i, _)| FeatureVector::from_dense(&[1.0 + i as f64, 2.0 + 2.0 * i as f64]).unwrap())
            .collect();
        let ids: Vec<String> = (0..labels.len()).map(|i| format!("n{i:02}")).collect();
        let Parameters::Retrieval { entries } = build_retrieval_index(&x, &labels, &ids).unwrap() else { unreachable!() };
        let q = FeatureVector::from_dense(&[0.5, 1.0]).unwrap();
        let d = classify_knn(&entries, &q, labels.len(), true).unwrap();
        let positives = labels.iter().filter(|&&l| l).count();
        prop_assert_eq!(d.positive, 2 * positives > labels.len());
    }

    /// Duplicating every document with α doubled leaves the parameters
    /// bit-identical.
    #[test]
    fn multinomial_duplication_invariance(
        counts in prop::collection::vec(prop::collection::vec(0u8..4, 3), 2..8),
        labels in prop::collection::vec(any::<bool>(), 2..8),
    ) {
        let n = counts.len().min(labels.len());
        let mut y = labels[..n].to_vec();
        y[0] = true;
        y[1] = false;
        let x: Vec<FeatureVector> = counts[..n]
            .iter()
            .map(|c| FeatureVector::from_dense(&c.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap())
            .collect();
        let single = train_nb_multinomial(&x, &y, &Hyperparameters::default()).unwrap();
        let x2: Vec<FeatureVector> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<bool> = y.iter().chain(&y).copied().collect();
        let doubled = Hyperparameters { alpha: 2.0, ..Default::default() };
        prop_assert_eq!(single, train_nb_multinomial(&x2, &y2, &doubled).unwrap());
    }

    #[test]
    fn hashed_embeddings_are_stable(text in "[a-z ]{1,40}") {
        let p = EmbeddingProvider::hashed(48);
        let a = p.embed("a", &text).unwrap();
        prop_assert_eq!(&a, &p.embed("b", &text).unwrap());
        prop_assert_eq!(a.dim(), 48);
        if a.nnz() > 0 {
            let n = a.squared_norm();
            let cos = a.entries().iter().map(|(_, v)| v * v).sum::<f64>() / n;
            prop_assert!((cos - 1.0).abs() <= 1e-15);
        }
    }
}

fn texts(seed: u64, n: usize) -> Vec<(String, String, bool)> {
    let words = ["we", "friends", "alone", "my", "body", "together", "numbers", "report", "felt", "happy"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(3..12);
            let t: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
            let label = t.contains(&"we") || t.contains(&"together");
            (format!("t{i:03}"), t.join(" "), label)
        })
        .collect()
}

#[test]
fn round_trip_reproduces_predictions_on_random_inputs() {
    let data = texts(1, 80);
    let examples: Vec<Example> = data.iter().map(|(i, t, l)| Example { id: i, text: t, label: *l }).collect();
    let resources = FeatureResources {
        lexicon: Some(Lexicon::demo()),
        embeddings: Some(EmbeddingProvider::hashed(16)),
        ..Default::default()
    };
    let queries = texts(2, 100);
    for family in Family::ALL {
        let source = match family {
            Family::NbMultinomial | Family::LinearSvm => FeatureSource::Learned,
            Family::NbGaussian => FeatureSource::Lexicon,
            Family::Logreg => FeatureSource::Hybrid,
            Family::RetrievalKnn => FeatureSource::Embedding,
        };
        let spec = ModelSpec { seed: 7, ..ModelSpec::new(family, source) };
        let a = ModelArtifact::fit(&spec, &LabelPath::aspect("SS"), &resources, &examples).unwrap();
        let b = decode_artifact(&encode_artifact(&a)).unwrap();
        for (id, text, _) in &queries {
            let (pa, pb) = (a.predict(id, text).unwrap(), b.predict(id, text).unwrap());
            assert_eq!(pa.score.to_bits(), pb.score.to_bits());
            assert_eq!(pa, pb);
        }
        let again = ModelArtifact::fit(&spec, &LabelPath::aspect("SS"), &resources, &examples).unwrap();
        assert_eq!(encode_artifact(&a), encode_artifact(&again), "{family} is not deterministic");
    }
}
