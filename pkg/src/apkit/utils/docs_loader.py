"""随包文档的查找与加载（apkit docs 子命令）"""
from pathlib import Path


def get_docs_dir() -> Path | None:
    """开发时取项目根目录下的 docs/，安装后取包内 apkit/docs/"""
    # 开发时：__file__ = .../src/apkit/utils/docs_loader.py，parents[3] 为项目根
    dev_path = Path(__file__).resolve().parents[3] / "docs"
    if dev_path.is_dir():
        return dev_path
    pkg_path = Path(__file__).resolve().parents[1] / "docs"
    if pkg_path.is_dir():
        return pkg_path
    return None


def list_doc_files() -> list[Path]:
    docs_dir = get_docs_dir()
    if docs_dir is None:
        return []
    return sorted(docs_dir.glob("*.md"))


def split_frontmatter(text: str) -> tuple[dict, str]:
    """拆出开头 --- 包围的 key: value 头部，返回 (头部, 正文)"""
    lines = text.splitlines()
    if not lines or lines[0].strip() != "---":
        return {}, text
    meta: dict = {}
    for idx, line in enumerate(lines[1:], start=1):
        if line.strip() == "---":
            return meta, "\n".join(lines[idx + 1:]).lstrip("\n")
        key, sep, value = line.partition(":")
        if sep:
            meta[key.strip()] = value.strip()
    return {}, text


def doc_slug(path: Path) -> str:
    """'03-completion.md' -> 'completion'"""
    parts = path.stem.split("-", 1)
    return parts[1] if len(parts) == 2 and parts[0].isdigit() else path.stem


def load_doc(path: Path) -> tuple[str, str]:
    """返回 (title, body)；title 取头部 title，否则取首个 # 标题，否则取 slug"""
    meta, body = split_frontmatter(path.read_text(encoding="utf-8"))
    title = meta.get("title")
    if not title:
        title = next((ln[2:].strip() for ln in body.splitlines() if ln.startswith("# ")),
                     doc_slug(path))
    return title, body


def find_doc(topic: str) -> Path | None:
    """按 slug、文件名或序号查找文档"""
    for path in list_doc_files():
        if topic in (doc_slug(path), path.stem, path.name, path.stem.split("-", 1)[0]):
            return path
    return None
