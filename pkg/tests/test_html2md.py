from hypothesis import given
from hypothesis import strategies as st

from corpuskit.html2md import html_to_markdown


class TestTagMapping:
    def test_h1(self):
        assert html_to_markdown("<h1>Title</h1>") == "# Title"

    def test_heading_levels(self):
        assert html_to_markdown("<h3>Sub</h3>") == "### Sub"
        assert html_to_markdown("<h6>Deep</h6>") == "###### Deep"

    def test_bold_in_paragraph(self):
        assert html_to_markdown("<p>Hello <b>world</b></p>") == "Hello **world**"

    def test_strong_and_em(self):
        assert html_to_markdown("<p><strong>x</strong> and <em>y</em></p>") == "**x** and *y*"

    def test_script_subtree_dropped(self):
        assert html_to_markdown("<script>x()</script><p>hi</p>") == "hi"

    def test_style_nav_header_footer_iframe_dropped(self):
        html = (
            "<style>p{}</style><nav>menu</nav><header>top</header>"
            "<p>body</p><footer>bottom</footer><iframe>frame</iframe>"
        )
        assert html_to_markdown(html) == "body"

    def test_unordered_list(self):
        assert html_to_markdown("<ul><li>a</li><li>b</li></ul>") == "- a\n- b"

    def test_ordered_list(self):
        assert html_to_markdown("<ol><li>a</li><li>b</li></ol>") == "1. a\n2. b"

    def test_link(self):
        assert html_to_markdown('<p><a href="http://x.io">here</a></p>') == "[here](http://x.io)"

    def test_pre_becomes_fenced_block(self):
        assert html_to_markdown("<pre>x = 1\ny = 2</pre>") == "```\nx = 1\ny = 2\n```"

    def test_pre_code_single_fence(self):
        assert html_to_markdown("<pre><code>x = 1</code></pre>") == "```\nx = 1\n```"

    def test_paragraphs_blank_line_separated(self):
        assert html_to_markdown("<p>one</p><p>two</p>") == "one\n\ntwo"

    def test_unknown_tags_unwrapped(self):
        assert html_to_markdown("<div><span>just</span> text</div>") == "just text"

    def test_table_degrades_to_text(self):
        out = html_to_markdown("<table><tr><td>a</td><td>b</td></tr></table>")
        assert "a" in out and "b" in out
        assert "<" not in out

    def test_whitespace_collapsed(self):
        assert html_to_markdown("<p>a   b\t c</p>") == "a b c"

    def test_entities_unescaped(self):
        assert html_to_markdown("<p>a &amp; b</p>") == "a & b"


class TestRobustness:
    def test_unclosed_tags(self):
        assert html_to_markdown("<p>open <b>bold") == "open **bold**"

    def test_stray_end_tags(self):
        assert html_to_markdown("</b></p>text</div>") == "text"

    def test_garbage_never_raises(self):
        for junk in ["<<<>>>", "<a href=>x", "<p", "", "<h1><h2>t</h1>", "\x00<b>"]:
            html_to_markdown(junk)  # must not raise

    def test_plain_text_passthrough(self):
        assert html_to_markdown("just plain text") == "just plain text"

    @given(st.text(alphabet=st.characters(blacklist_characters="<&\x00"), max_size=200))
    def test_idempotent_on_tag_free_text(self, text):
        once = html_to_markdown(text)
        assert html_to_markdown(once) == once
