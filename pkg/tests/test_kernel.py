import subprocess
import sys
import textwrap

import pytest

from atc import hmfexp

BLOCKED = textwrap.dedent("""
    import importlib.abc, sys

    class Block(importlib.abc.MetaPathFinder):
        def find_spec(self, name, path, target=None):
            if name == "atc._kernel":
                raise ImportError("blocked")

    sys.meta_path.insert(0, Block())
    from atc import hmfexp
    print(hmfexp.BACKEND)
    hmfexp.kernel_class("python")
    try:
        hmfexp.kernel_class("mpfr")
    except RuntimeError:
        print("no-mpfr")
""")


def test_fallback_selected_when_extension_missing():
    proc = subprocess.run([sys.executable, "-c", BLOCKED], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.split() == ["python", "no-mpfr"]


@pytest.mark.skipif(hmfexp.BACKEND != "mpfr", reason="compiled kernel not built")
def test_compiled_kernel_is_default():
    assert hmfexp.kernel_class() is hmfexp._ext.Kernel


def test_unknown_backend():
    with pytest.raises(ValueError):
        hmfexp.kernel_class("gpu")
