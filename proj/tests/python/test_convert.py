import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import vitclust as vc

torch = pytest.importorskip("torch")
transformers = pytest.importorskip("transformers")

CONVERTER = Path(__file__).resolve().parents[2] / "tools" / "convert_checkpoint.py"


def test_converted_checkpoint_matches_reference(tmp_path):
    cfg = transformers.ViTConfig(image_size=32, patch_size=8, hidden_size=48, num_hidden_layers=2,
                                 num_attention_heads=4, intermediate_size=96, layer_norm_eps=1e-12)
    torch.manual_seed(0)
    model = transformers.ViTModel(cfg, add_pooling_layer=False).eval()
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.05 * torch.randn_like(p))
    model.save_pretrained(tmp_path / "ckpt")
    out = tmp_path / "w.vitw"
    subprocess.check_call([sys.executable, str(CONVERTER), str(tmp_path / "ckpt"), str(out)])

    w = vc.load_weights(str(out))
    img = np.random.default_rng(1).standard_normal((3, 32, 32)).astype(np.float32)
    ours = np.asarray(vc.embed(w, img, False)).ravel()
    with torch.no_grad():
        ref = model(pixel_values=torch.from_numpy(img)[None]).last_hidden_state[0, 0].numpy()
    assert np.abs(ours - ref).max() < 1e-4 * max(1.0, np.abs(ref).max())
