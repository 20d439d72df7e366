from pathlib import Path

from mkdocs.commands.build import build
from mkdocs.config.base import load_config

PAGES = [
    Path("404.html"),
    Path("cli/index.html"),
    Path("index.html"),
    Path("metrics/index.html"),
    Path("scenarios/index.html"),
]


def test_build_docs(tmp_path):
    mkdocs_config = load_config(
        "mkdocs.yml", theme={"name": "mkdocs"}, site_dir=str(tmp_path / "site")
    )
    build(mkdocs_config, dirty=False)
    site_dir = Path(mkdocs_config["site_dir"])
    generated = [f.relative_to(site_dir) for f in site_dir.glob("**/*.html")]
    assert sorted(generated) == sorted(PAGES)
