"""Train a small classifier, break it, then put dithering in front of it.

The script trains the bundled two-layer network on synthetic pattern images,
crafts adversarial versions of a held-out split with the three attack
families, and measures accuracy with and without input transforms. Sizes are
kept modest so the whole run takes well under a minute.

Run from the repository root:

    python demos/attack_and_defend.py
"""

import numpy as np

from ditherdefense.attacks import AttackConfig, derive_image_seed, run_attack
from ditherdefense.dataset import DatasetParams, generate_dataset
from ditherdefense.evaluate import evaluate_accuracy
from ditherdefense.filters import pipeline_from_config
from ditherdefense.tinymodel import CrossEntropyLoss, accuracy, init_model, train

SIZE = 32
EPSILON = 8.0 / 255.0
EVAL_COUNT = 60


def craft(model, images, labels, family, steps=20, base_seed=7):
    out = []
    for i in range(len(images)):
        cfg = AttackConfig(
            family=family, epsilon=EPSILON, steps=steps,
            seed=derive_image_seed(base_seed, i),
        )
        loss = CrossEntropyLoss(int(labels[i]))
        out.append(run_attack(model, images[i], loss, cfg).adversarial)
    return out


def main():
    train_ds = generate_dataset(DatasetParams(count=400, size=SIZE, noise=0.3, seed=101))
    eval_ds = generate_dataset(DatasetParams(count=EVAL_COUNT, size=SIZE, noise=0.3, seed=102))
    model = init_model(height=SIZE, width=SIZE, channels=3, hidden=128,
                       classes=4, seed=7)
    model = train(model, train_ds, epochs=200, learning_rate=0.01,
                  momentum=0.9, seed=7, batch_size=40)
    print(f"train accuracy {accuracy(model, train_ds):.3f}, "
          f"eval accuracy {accuracy(model, eval_ds):.3f}")
    print()

    defenses = {
        "no defense": None,
        "dither K=4": pipeline_from_config([{"op": "fs_dither", "levels": 4}]),
        "dither K=4 + blur": pipeline_from_config([
            {"op": "fs_dither", "levels": 4},
            {"op": "blur", "sigma": 3.0, "size": 9},
        ]),
    }

    print(f"accuracy on {EVAL_COUNT} eval images, l-inf budget {EPSILON:.4f}")
    header = f"{'attack':10s}" + "".join(f"{name:>20s}" for name in defenses)
    print(header)
    clean_row = f"{'clean':10s}"
    for defense in defenses.values():
        acc = evaluate_accuracy(model, eval_ds, defense=defense)
        clean_row += f"{acc:20.3f}"
    print(clean_row)
    for family in ("pgd", "mifgsm", "sia"):
        adv = craft(model, eval_ds.images, eval_ds.labels, family)
        row = f"{family:10s}"
        for defense in defenses.values():
            acc = evaluate_accuracy(model, eval_ds, defense=defense,
                                    adversarial=adv)
            row += f"{acc:20.3f}"
        print(row)
    print()
    print("The attacks collapse the undefended column. Dithering alone")
    print("barely moves the needle: error diffusion re-paints the image but")
    print("reproduces its low-frequency content, perturbation included.")
    print("Adding the blur strips the high-frequency halftone noise and most")
    print("of the perturbation with it, recovering a large share of the")
    print("accuracy at a modest clean-accuracy cost.")


if __name__ == "__main__":
    main()
