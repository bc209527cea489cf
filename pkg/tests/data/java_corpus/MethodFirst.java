package corpus.order;

public class MethodFirst {
    public int parseLength(byte[] header) {
        int len = ((header[0] & 0xFF) << 8) | (header[1] & 0xFF);
        if (len < 0) {
            throw new IllegalStateException("negative length");
        }
        return len;
    }

    private byte[] header;

    public MethodFirst(byte[] header) {
        this.header = header;
    }

    public byte[] raw() {
        return header;
    }
}
