import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cleval import streams
from cleval.rng import stream_rng

MNIST_DIR = Path(__file__).resolve().parent.parent / "data" / "mnist"


def tiny_split(n_tasks=5, n_classes=10, seed=0, iters=20):
    return streams.make_split_synthetic(
        n_classes=n_classes,
        dims=4,
        per_class_train=12,
        per_class_eval=8,
        n_tasks=n_tasks,
        seed=seed,
        iters_per_task=iters,
    )


class TestSyntheticSplit:
    def test_sequential_class_grouping(self):
        stream = tiny_split()
        assert stream.tasks[0].classes == frozenset({0, 1})
        assert stream.tasks[4].classes == frozenset({8, 9})

    def test_task_labels_match_classes(self):
        stream = tiny_split()
        for task in stream.tasks:
            assert set(task.train.labels.tolist()) == set(task.classes)
            assert set(task.eval_set.labels.tolist()) == set(task.classes)

    def test_indivisible_class_count_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            tiny_split(n_tasks=3)

    def test_single_task_stream_is_stationary(self):
        stream = tiny_split(n_tasks=1, n_classes=10)
        assert len(stream.tasks) == 1
        assert stream.boundaries == (20,)

    def test_fixed_seed_is_bit_identical(self):
        a = tiny_split(seed=7)
        b = tiny_split(seed=7)
        for ta, tb in zip(a.tasks, b.tasks):
            assert np.array_equal(ta.train.inputs, tb.train.inputs)
            assert np.array_equal(ta.eval_set.inputs, tb.eval_set.inputs)

    def test_train_eval_disjoint(self):
        stream = tiny_split()
        for task in stream.tasks:
            train_rows = {row.tobytes() for row in task.train.inputs}
            eval_rows = {row.tobytes() for row in task.eval_set.inputs}
            assert not train_rows & eval_rows

    def test_class_means_on_radius_4_sphere(self):
        stream = tiny_split()
        # class-conditional sample means approximate the true means
        for task in stream.tasks:
            for c in task.classes:
                pts = task.train.inputs[task.train.labels == c]
                norm = np.linalg.norm(pts.mean(axis=0))
                assert 2.0 < norm < 6.0


class TestPermuted:
    def base(self):
        stream = tiny_split(n_tasks=1)
        return stream.tasks[0].train, stream.tasks[0].eval_set

    def test_first_task_is_identity(self):
        train, eval_set = self.base()
        stream = streams.make_permuted_stream(train, eval_set, n_tasks=3, seed=0, iters_per_task=10)
        assert np.array_equal(stream.tasks[0].train.inputs, train.inputs)
        assert stream.scenario == "domain_incremental"

    def test_permutations_are_bijections(self):
        train, eval_set = self.base()
        stream = streams.make_permuted_stream(train, eval_set, n_tasks=4, seed=1, iters_per_task=10)
        for task in stream.tasks[1:]:
            # each permuted row is a rearrangement of the base row
            assert np.allclose(np.sort(task.train.inputs, axis=1), np.sort(train.inputs, axis=1))
            assert np.array_equal(task.train.labels, train.labels)

    def test_same_seed_same_permutations(self):
        train, eval_set = self.base()
        a = streams.make_permuted_stream(train, eval_set, n_tasks=4, seed=9, iters_per_task=10)
        b = streams.make_permuted_stream(train, eval_set, n_tasks=4, seed=9, iters_per_task=10)
        for ta, tb in zip(a.tasks, b.tasks):
            assert np.array_equal(ta.train.inputs, tb.train.inputs)


def write_idx_pair(tmp_path, images, labels, image_magic=streams.IMAGES_MAGIC, label_magic=streams.LABELS_MAGIC):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    img_path = tmp_path / "images-idx3-ubyte"
    lbl_path = tmp_path / "labels-idx1-ubyte"
    img_path.write_bytes(
        struct.pack(">IIII", image_magic, *images.shape) + images.tobytes()
    )
    lbl_path.write_bytes(struct.pack(">II", label_magic, labels.shape[0]) + labels.tobytes())
    return img_path, lbl_path


class TestIdx:
    def test_hand_crafted_pair(self, tmp_path):
        images = np.array([[[0, 255], [128, 64]], [[255, 255], [0, 0]]])
        img, lbl = write_idx_pair(tmp_path, images, [3, 7])
        ds = streams.load_idx(img, lbl)
        assert len(ds) == 2
        assert ds.inputs.shape == (2, 4)
        assert ds.inputs[0, 1] == 1.0  # 255 -> 1.0
        assert ds.inputs[1, 3] == 0.0
        assert ds.labels.tolist() == [3, 7]

    def test_bad_magic(self, tmp_path):
        images = np.zeros((1, 2, 2))
        img, lbl = write_idx_pair(tmp_path, images, [0], image_magic=streams.LABELS_MAGIC)
        with pytest.raises(streams.IdxFormatError, match="bad magic"):
            streams.load_idx(img, lbl)

    def test_truncated_file(self, tmp_path):
        images = np.zeros((2, 2, 2))
        img, lbl = write_idx_pair(tmp_path, images, [0, 1])
        img.write_bytes(img.read_bytes()[:-3])
        with pytest.raises(streams.IdxFormatError, match="truncated"):
            streams.load_idx(img, lbl)

    def test_count_mismatch(self, tmp_path):
        images = np.zeros((2, 2, 2))
        img, lbl = write_idx_pair(tmp_path, images, [0, 1, 2])
        with pytest.raises(streams.IdxFormatError, match="images but"):
            streams.load_idx(img, lbl)

    @pytest.mark.skipif(not streams.mnist_available(MNIST_DIR), reason="MNIST files not present")
    def test_official_test_set_label_histogram(self):
        ds = streams.load_idx(
            MNIST_DIR / "t10k-images-idx3-ubyte", MNIST_DIR / "t10k-labels-idx1-ubyte"
        )
        assert len(ds) == 10000
        hist = np.bincount(ds.labels, minlength=10).tolist()
        assert hist == [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009]


class TestSubsample:
    def task(self):
        return tiny_split().tasks[0]

    def test_all_returns_full_split_in_stable_order(self):
        task = self.task()
        cfg = streams.EvalSubsampleConfig(sample_size=streams.ALL)
        out = streams.subsample_eval(task, cfg, stream_rng(0, "eval"))
        assert out is task.eval_set

    def test_exhaustive_sample_is_permutation(self):
        task = self.task()
        n = len(task.eval_set)
        cfg = streams.EvalSubsampleConfig(sample_size=n)
        out = streams.subsample_eval(task, cfg, stream_rng(0, "eval"))
        assert sorted(map(tuple, out.inputs.tolist())) == sorted(map(tuple, task.eval_set.inputs.tolist()))

    def test_deterministic_without_resampling(self):
        task = self.task()
        cfg = streams.EvalSubsampleConfig(sample_size=5, resample_each_eval=False)
        a = streams.subsample_eval(task, cfg, stream_rng(3, "eval/task1"))
        b = streams.subsample_eval(task, cfg, stream_rng(3, "eval/task1"))
        assert np.array_equal(a.inputs, b.inputs)

    def test_train_split_source(self):
        task = self.task()
        cfg = streams.EvalSubsampleConfig(sample_size=streams.ALL, source="train_split")
        out = streams.subsample_eval(task, cfg, stream_rng(0, "eval"))
        assert out is task.train

    def test_oversized_sample_rejected(self):
        task = self.task()
        cfg = streams.EvalSubsampleConfig(sample_size=len(task.eval_set) + 1)
        with pytest.raises(ValueError, match="exceeds split size"):
            streams.subsample_eval(task, cfg, stream_rng(0, "eval"))


class TestNextBatch:
    def test_first_iteration_is_task_one(self):
        stream = tiny_split()
        _, k = streams.next_batch(stream, 1, 4, stream_rng(0, "batches"))
        assert k == 1

    def test_boundary_convention(self):
        stream = tiny_split()  # 20 iters per task
        assert streams.next_batch(stream, 20, 4, stream_rng(0, "b"))[1] == 1
        assert streams.next_batch(stream, 21, 4, stream_rng(0, "b"))[1] == 2

    def test_labels_belong_to_current_task(self):
        stream = tiny_split()
        rng = stream_rng(1, "batches")
        for t in (1, 25, 47, 99):
            batch, k = streams.next_batch(stream, t, 8, rng)
            assert set(batch.labels.tolist()) <= set(stream.tasks[k - 1].classes)

    def test_beyond_stream_end(self):
        stream = tiny_split()
        with pytest.raises(ValueError, match="outside stream"):
            streams.next_batch(stream, 101, 4, stream_rng(0, "b"))

    @given(t=st.integers(1, 100))
    @settings(max_examples=40, deadline=None)
    def test_task_of_matches_boundary_definition(self, t):
        stream = tiny_split()
        k = stream.task_of(t)
        lo = stream.boundaries[k - 2] if k >= 2 else 0
        assert lo < t <= stream.boundaries[k - 1]
